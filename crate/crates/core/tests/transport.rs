//! Wildcard matching checked against a regex translation of the pattern,
//! plus broker routing through the public API.

use foa_core::transport::{topic_matches, validate_pattern, Broker, Envelope, Message, ResultStatus, SubscribeOptions, Topic};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

/// `+` is one segment, a trailing `#` is zero or more trailing segments.
fn pattern_regex(pattern: &str) -> Regex {
    let segs: Vec<&str> = pattern.split('/').collect();
    let mut re = String::from("^");
    for (i, seg) in segs.iter().enumerate() {
        match *seg {
            "#" => {
                // "a/#" also matches "a"
                if i == 0 {
                    re.push_str(".*");
                } else {
                    re.truncate(re.len() - 1);
                    re.push_str("(/.*)?");
                }
            }
            "+" => re.push_str("[^/]*"),
            lit => re.push_str(&regex::escape(lit)),
        }
        if i + 1 < segs.len() {
            re.push('/');
        }
    }
    re.push('$');
    Regex::new(&re).unwrap()
}

#[test]
fn wildcard_matching_agrees_with_regex_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let words = ["foa", "jobs", "agents", "a1", "tasks", "x"];
    let mut checked = 0;
    while checked < 2000 {
        let tlen = rng.random_range(1..5);
        let topic: Vec<&str> = (0..tlen).map(|_| words[rng.random_range(0..words.len())]).collect();
        let plen = rng.random_range(1..5);
        let mut pat: Vec<&str> = (0..plen)
            .map(|_| match rng.random_range(0..4) {
                0 => "+",
                _ => words[rng.random_range(0..words.len())],
            })
            .collect();
        if rng.random_bool(0.3) {
            *pat.last_mut().unwrap() = "#";
        }
        let (pattern, topic) = (pat.join("/"), topic.join("/"));
        assert!(validate_pattern(&pattern).is_ok(), "{pattern}");
        assert_eq!(
            topic_matches(&pattern, &topic),
            pattern_regex(&pattern).is_match(&topic),
            "pattern {pattern} topic {topic}"
        );
        checked += 1;
    }
}

#[test]
fn misplaced_multi_level_wildcard_rejected() {
    assert!(validate_pattern("foa/#/x").is_err());
    assert!(validate_pattern("foa/a#").is_err());
}

fn result_msg() -> Message {
    Message::Result {
        job_id: "job-0001".into(),
        task_id: "t".into(),
        status: ResultStatus::Done,
        answer: None,
    }
}

#[test]
fn retained_only_on_allowed_topics() {
    let broker = Broker::new();
    let msg = result_msg();
    assert!(broker
        .publish(Envelope::new(Topic::jobs(), &msg, "c1", "client").unwrap().retained())
        .is_err());
    broker
        .publish(Envelope::new(Topic::result(), &msg, "c2", "client").unwrap().retained())
        .unwrap();
    let late = broker.subscribe("foa/#", "late").unwrap();
    assert_eq!(late.drain().len(), 1);
}

#[test]
fn no_local_suppresses_own_messages() {
    let broker = Broker::new();
    let own = broker
        .subscribe_with(
            Topic::jobs().as_str(),
            SubscribeOptions {
                client_id: "me".into(),
                no_local: true,
            },
        )
        .unwrap();
    let other = broker.subscribe(Topic::jobs().as_str(), "other").unwrap();
    let msg = result_msg();
    broker.publish(Envelope::new(Topic::jobs(), &msg, "c1", "me").unwrap()).unwrap();
    assert_eq!(own.drain().len(), 0);
    assert_eq!(other.drain().len(), 1);
}

//! In-process broker with MQTT-shaped semantics.
//!
//! Subscriptions are queue-backed: the broker appends matching envelopes to
//! each subscription's queue at publish time and the owner drains it. One
//! queue per subscription gives serial, in-order handling per subscriber.

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use super::message::{Envelope, Qos};
use super::topic::{topic_matches, validate_pattern, TopicClass};
use crate::error::{Error, Result};

type Queue = Arc<Mutex<VecDeque<Envelope>>>;

struct SubEntry {
    id: u64,
    pattern: String,
    client_id: String,
    no_local: bool,
    queue: Queue,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrokerStats {
    /// Publish calls per topic class.
    pub published: BTreeMap<TopicClass, u64>,
    /// Envelopes placed on subscriber queues, duplicates included.
    pub deliveries: BTreeMap<TopicClass, u64>,
    pub published_by_topic: BTreeMap<String, u64>,
    pub deliveries_by_topic: BTreeMap<String, u64>,
}

impl BrokerStats {
    pub fn total_published(&self) -> u64 {
        self.published.values().sum()
    }

    pub fn total_deliveries(&self) -> u64 {
        self.deliveries.values().sum()
    }

    pub fn deliveries_on(&self, topic: &str) -> u64 {
        self.deliveries_by_topic.get(topic).copied().unwrap_or(0)
    }

    pub fn published_on(&self, topic: &str) -> u64 {
        self.published_by_topic.get(topic).copied().unwrap_or(0)
    }

    /// Per-class differences `self - earlier`, for measuring one window.
    pub fn since(&self, earlier: &BrokerStats) -> BrokerStats {
        fn diff<K: Ord + Clone>(a: &BTreeMap<K, u64>, b: &BTreeMap<K, u64>) -> BTreeMap<K, u64> {
            a.iter()
                .filter_map(|(k, v)| {
                    let d = v - b.get(k).copied().unwrap_or(0);
                    (d > 0).then(|| (k.clone(), d))
                })
                .collect()
        }
        BrokerStats {
            published: diff(&self.published, &earlier.published),
            deliveries: diff(&self.deliveries, &earlier.deliveries),
            published_by_topic: diff(&self.published_by_topic, &earlier.published_by_topic),
            deliveries_by_topic: diff(&self.deliveries_by_topic, &earlier.deliveries_by_topic),
        }
    }
}

#[derive(Default)]
struct State {
    next_sub: u64,
    subs: Vec<SubEntry>,
    retained: BTreeMap<String, Envelope>,
    clocks: BTreeMap<String, u64>,
    seq: u64,
    shutdown: bool,
    duplicate_qos1: bool,
    capture: Option<Vec<Envelope>>,
    stats: BrokerStats,
}

impl State {
    fn deliver(&mut self, queue: &Queue, env: &Envelope) {
        let copies = if self.duplicate_qos1 && env.qos == Qos::AtLeastOnce {
            2
        } else {
            1
        };
        let mut q = queue.lock().unwrap_or_else(|e| e.into_inner());
        for _ in 0..copies {
            q.push_back(env.clone());
        }
        *self.stats.deliveries.entry(env.topic.class()).or_default() += copies;
        *self
            .stats
            .deliveries_by_topic
            .entry(env.topic.to_string())
            .or_default() += copies;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Receipt {
    pub seq: u64,
    pub sent_at: u64,
    /// Envelopes queued for subscribers by this publish.
    pub deliveries: u64,
}

#[derive(Debug, Clone, Default)]
pub struct SubscribeOptions {
    pub client_id: String,
    /// Skip envelopes whose sender is this subscriber's client id.
    pub no_local: bool,
}

/// Cheap to clone; all clones share one broker.
#[derive(Clone, Default)]
pub struct Broker {
    state: Arc<Mutex<State>>,
}

impl std::fmt::Debug for Broker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Broker").finish_non_exhaustive()
    }
}

impl Broker {
    pub fn new() -> Broker {
        Broker::default()
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Stamps `sent_at`/`seq` and queues the envelope for every matching
    /// subscription active now.
    pub fn publish(&self, mut env: Envelope) -> Result<Receipt> {
        let mut st = self.lock();
        if st.shutdown {
            return Err(Error::Unavailable);
        }
        if env.retained && !env.topic.class().allows_retained() {
            return Err(Error::invalid(format!(
                "retained publish not allowed on {}",
                env.topic
            )));
        }
        st.seq += 1;
        let clock = st.clocks.entry(env.sender_id.clone()).or_default();
        *clock += 1;
        env.sent_at = *clock;
        env.seq = st.seq;

        *st.stats.published.entry(env.topic.class()).or_default() += 1;
        *st.stats
            .published_by_topic
            .entry(env.topic.to_string())
            .or_default() += 1;
        if let Some(cap) = st.capture.as_mut() {
            cap.push(env.clone());
        }

        let targets: Vec<Queue> = st
            .subs
            .iter()
            .filter(|s| topic_matches(&s.pattern, env.topic.as_str()))
            .filter(|s| !(s.no_local && s.client_id == env.sender_id))
            .map(|s| s.queue.clone())
            .collect();
        let before = st.stats.total_deliveries();
        for q in &targets {
            st.deliver(q, &env);
        }
        let deliveries = st.stats.total_deliveries() - before;
        if env.retained {
            st.retained.insert(env.topic.to_string(), env.clone());
        }
        Ok(Receipt {
            seq: env.seq,
            sent_at: env.sent_at,
            deliveries,
        })
    }

    pub fn subscribe(&self, pattern: &str, client_id: &str) -> Result<Subscription> {
        self.subscribe_with(
            pattern,
            SubscribeOptions {
                client_id: client_id.to_string(),
                no_local: false,
            },
        )
    }

    /// Registers a subscription; retained envelopes on matching topics are
    /// queued immediately.
    pub fn subscribe_with(&self, pattern: &str, opts: SubscribeOptions) -> Result<Subscription> {
        validate_pattern(pattern)?;
        let mut st = self.lock();
        if st.shutdown {
            return Err(Error::Unavailable);
        }
        st.next_sub += 1;
        let id = st.next_sub;
        let queue: Queue = Arc::default();
        let retained: Vec<Envelope> = st
            .retained
            .values()
            .filter(|e| topic_matches(pattern, e.topic.as_str()))
            .filter(|e| !(opts.no_local && e.sender_id == opts.client_id))
            .cloned()
            .collect();
        for env in &retained {
            st.deliver(&queue, env);
        }
        st.subs.push(SubEntry {
            id,
            pattern: pattern.to_string(),
            client_id: opts.client_id,
            no_local: opts.no_local,
            queue: queue.clone(),
        });
        Ok(Subscription {
            id,
            pattern: pattern.to_string(),
            queue,
            broker: self.clone(),
        })
    }

    fn unsubscribe(&self, id: u64) {
        self.lock().subs.retain(|s| s.id != id);
    }

    pub fn retained(&self, topic: &str) -> Option<Envelope> {
        self.lock().retained.get(topic).cloned()
    }

    /// Fault injection: queue every QoS 1 delivery twice.
    pub fn set_duplicate_delivery(&self, on: bool) {
        self.lock().duplicate_qos1 = on;
    }

    pub fn start_capture(&self) {
        self.lock().capture = Some(Vec::new());
    }

    /// Published envelopes since [`Broker::start_capture`], in publish order.
    pub fn take_capture(&self) -> Vec<Envelope> {
        self.lock().capture.take().unwrap_or_default()
    }

    pub fn stats(&self) -> BrokerStats {
        self.lock().stats.clone()
    }

    /// Broker-wide publish sequence number of the latest publish.
    pub fn seq(&self) -> u64 {
        self.lock().seq
    }

    pub fn subscription_count(&self) -> usize {
        self.lock().subs.len()
    }

    pub fn shutdown(&self) {
        let mut st = self.lock();
        st.shutdown = true;
        st.subs.clear();
    }
}

/// Queue handle for one subscription; dropping it unsubscribes.
pub struct Subscription {
    id: u64,
    pattern: String,
    queue: Queue,
    broker: Broker,
}

impl std::fmt::Debug for Subscription {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Subscription")
            .field("id", &self.id)
            .field("pattern", &self.pattern)
            .finish()
    }
}

impl Subscription {
    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn try_recv(&self) -> Option<Envelope> {
        self.queue.lock().unwrap_or_else(|e| e.into_inner()).pop_front()
    }

    pub fn drain(&self) -> Vec<Envelope> {
        self.queue
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .drain(..)
            .collect()
    }

    pub fn pending(&self) -> usize {
        self.queue.lock().unwrap_or_else(|e| e.into_inner()).len()
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        self.broker.unsubscribe(self.id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{Message, Topic};

    fn env(topic: Topic, sender: &str) -> Envelope {
        let msg = Message::Result {
            job_id: "j".into(),
            task_id: "t".into(),
            status: crate::transport::ResultStatus::Done,
            answer: None,
        };
        Envelope::new(topic, &msg, "corr", sender).unwrap()
    }

    #[test]
    fn wildcard_delivery_and_no_crosstalk() {
        let b = Broker::new();
        let all = b.subscribe("foa/clusters/+/channel", "obs").unwrap();
        let c1 = b.subscribe("foa/clusters/c1/channel", "x").unwrap();
        b.publish(env(Topic::cluster_channel("c2").unwrap(), "s")).unwrap();
        assert_eq!(all.drain().len(), 1);
        assert_eq!(c1.drain().len(), 0);
        let a1 = b.subscribe("foa/agents/a1/tasks", "a1").unwrap();
        b.publish(env(Topic::agent_tasks("a2").unwrap(), "o")).unwrap();
        assert!(a1.try_recv().is_none());
    }

    #[test]
    fn retained_goes_to_late_subscribers() {
        let b = Broker::new();
        b.publish(env(Topic::retain(), "o").retained()).unwrap();
        let late = b.subscribe("foa/retain", "z").unwrap();
        assert_eq!(late.drain().len(), 1);
        assert!(b.publish(env(Topic::meta(), "o").retained()).is_err());
    }

    #[test]
    fn stamps_and_fifo() {
        let b = Broker::new();
        let s = b.subscribe("foa/#", "obs").unwrap();
        for _ in 0..3 {
            b.publish(env(Topic::meta(), "p")).unwrap();
        }
        b.publish(env(Topic::meta(), "q")).unwrap();
        let got = s.drain();
        let clocks: Vec<(String, u64, u64)> = got
            .iter()
            .map(|e| (e.sender_id.clone(), e.sent_at, e.seq))
            .collect();
        assert_eq!(
            clocks,
            vec![
                ("p".into(), 1, 1),
                ("p".into(), 2, 2),
                ("p".into(), 3, 3),
                ("q".into(), 1, 4)
            ]
        );
    }

    #[test]
    fn no_local_and_duplicates() {
        let b = Broker::new();
        let me = b
            .subscribe_with(
                "foa/meta",
                SubscribeOptions {
                    client_id: "me".into(),
                    no_local: true,
                },
            )
            .unwrap();
        b.publish(env(Topic::meta(), "me")).unwrap();
        assert_eq!(me.pending(), 0);
        b.set_duplicate_delivery(true);
        let r = b.publish(env(Topic::meta(), "other")).unwrap();
        assert_eq!(r.deliveries, 2);
        b.publish(env(Topic::meta(), "other").with_qos(Qos::AtMostOnce))
            .unwrap();
        assert_eq!(me.drain().len(), 3);
        assert_eq!(b.stats().published[&TopicClass::Meta], 3);
    }

    #[test]
    fn drop_unsubscribes_and_shutdown() {
        let b = Broker::new();
        let s = b.subscribe("#", "x").unwrap();
        assert_eq!(b.subscription_count(), 1);
        drop(s);
        assert_eq!(b.subscription_count(), 0);
        b.shutdown();
        assert!(matches!(b.publish(env(Topic::meta(), "x")), Err(Error::Unavailable)));
        assert!(matches!(b.subscribe("#", "x"), Err(Error::Unavailable)));
    }
}

//! Publish/subscribe fabric: topic schema, envelopes and an in-process
//! broker. QoS 0 and 1 are supported; receivers make QoS 1 effectively
//! exactly-once by deduplicating on `correlation_id`.

mod broker;
mod message;
mod topic;

pub use broker::{Broker, BrokerStats, Receipt, SubscribeOptions, Subscription};
pub use message::{DispatchTask, Envelope, Message, Qos, ResultStatus};
pub use topic::{topic_matches, validate_pattern, Topic, TopicClass};

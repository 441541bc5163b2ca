//! Channel model: non-FIFO, possibly lossy, each message scheduled on its own.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::types::{MessageKind, ProcessId};

/// Scripted treatment of messages matching a link and a send-time window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkRule {
    #[serde(default)]
    pub from: Option<ProcessId>,
    #[serde(default)]
    pub to: Option<ProcessId>,
    #[serde(default)]
    pub kind: Option<MessageKind>,
    /// First send time the rule applies to.
    #[serde(default)]
    pub start: u64,
    /// Send times from here on are no longer affected.
    #[serde(default)]
    pub until: Option<u64>,
    /// Hold matching messages until this time; when absent they are dropped.
    #[serde(default)]
    pub deliver_at: Option<u64>,
}

impl LinkRule {
    pub fn drop(from: Option<ProcessId>, to: Option<ProcessId>) -> Self {
        LinkRule {
            from,
            to,
            kind: None,
            start: 0,
            until: None,
            deliver_at: None,
        }
    }

    pub fn kind(mut self, kind: MessageKind) -> Self {
        self.kind = Some(kind);
        self
    }

    pub fn window(mut self, start: u64, until: Option<u64>) -> Self {
        self.start = start;
        self.until = until;
        self
    }

    pub fn hold_until(mut self, t: u64) -> Self {
        self.deliver_at = Some(t);
        self
    }

    fn matches(&self, now: u64, from: ProcessId, to: ProcessId, kind: MessageKind) -> bool {
        self.from.is_none_or(|f| f == from)
            && self.to.is_none_or(|t| t == to)
            && self.kind.is_none_or(|k| k == kind)
            && now >= self.start
            && self.until.is_none_or(|u| now < u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomNetwork {
    pub min_delay: u64,
    pub max_delay: u64,
    pub drop_prob: f64,
    /// Messages sent at or after this time are never lost.
    pub horizon: u64,
    /// Number of partition intervals. During each, processes are split into
    /// two random sides and messages between the sides are lost. All of
    /// them end before the horizon.
    #[serde(default)]
    pub partitions: u32,
    /// Longest partition interval.
    #[serde(default)]
    pub max_partition: u64,
}

impl RandomNetwork {
    /// Draws the partition intervals for one run, as drop rules on every
    /// link crossing a cut.
    pub fn draw_partitions(&self, processes: &[ProcessId], rng: &mut ChaCha8Rng) -> Vec<LinkRule> {
        let mut rules = Vec::new();
        if self.horizon == 0 {
            return rules;
        }
        for _ in 0..self.partitions {
            let start = rng.gen_range(0..self.horizon);
            let len = rng.gen_range(1..=self.max_partition.max(1));
            let until = (start + len).min(self.horizon);
            let side: Vec<bool> = processes.iter().map(|_| rng.gen_bool(0.5)).collect();
            for (a, &p) in processes.iter().enumerate() {
                for (b, &q) in processes.iter().enumerate() {
                    if side[a] != side[b] {
                        rules.push(LinkRule::drop(Some(p), Some(q)).window(start, Some(until)));
                    }
                }
            }
        }
        rules
    }
}

impl Default for RandomNetwork {
    fn default() -> Self {
        RandomNetwork {
            min_delay: 1,
            max_delay: 3,
            drop_prob: 0.0,
            horizon: 5000,
            partitions: 0,
            max_partition: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkPolicy {
    Scripted {
        delay: u64,
        rules: Vec<LinkRule>,
    },
    /// Sampled delays and losses, plus the drawn partition rules.
    Random {
        net: RandomNetwork,
        cuts: Vec<LinkRule>,
    },
}

impl Default for NetworkPolicy {
    fn default() -> Self {
        NetworkPolicy::Scripted {
            delay: 1,
            rules: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    DeliverAt(u64),
    Drop(&'static str),
}

impl NetworkPolicy {
    pub fn decide(
        &self,
        now: u64,
        from: ProcessId,
        to: ProcessId,
        kind: MessageKind,
        rng: &mut ChaCha8Rng,
    ) -> Decision {
        match self {
            NetworkPolicy::Scripted { delay, rules } => {
                let normal = now + (*delay).max(1);
                match rules.iter().find(|r| r.matches(now, from, to, kind)) {
                    None => Decision::DeliverAt(normal),
                    Some(LinkRule {
                        deliver_at: Some(t), ..
                    }) => Decision::DeliverAt((*t).max(normal)),
                    Some(_) => Decision::Drop("link"),
                }
            }
            NetworkPolicy::Random { net, cuts } => {
                if cuts.iter().any(|r| r.matches(now, from, to, kind)) {
                    return Decision::Drop("partition");
                }
                let lo = net.min_delay.max(1);
                let hi = net.max_delay.max(lo);
                let delay = rng.gen_range(lo..=hi);
                if now < net.horizon && net.drop_prob > 0.0 && rng.gen_bool(net.drop_prob.min(1.0)) {
                    Decision::Drop("loss")
                } else {
                    Decision::DeliverAt(now + delay)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn first_matching_rule_wins() {
        let policy = NetworkPolicy::Scripted {
            delay: 1,
            rules: vec![
                LinkRule::drop(Some(4), Some(1)).kind(MessageKind::Write),
                LinkRule::drop(Some(4), Some(2)).window(2, Some(40)).hold_until(40),
            ],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            policy.decide(2, 4, 1, MessageKind::Write, &mut rng),
            Decision::Drop("link")
        );
        assert_eq!(
            policy.decide(2, 4, 1, MessageKind::Read, &mut rng),
            Decision::DeliverAt(3)
        );
        assert_eq!(
            policy.decide(5, 4, 2, MessageKind::Write, &mut rng),
            Decision::DeliverAt(40)
        );
        assert_eq!(
            policy.decide(40, 4, 2, MessageKind::Write, &mut rng),
            Decision::DeliverAt(41)
        );
    }

    #[test]
    fn nothing_is_lost_after_the_horizon() {
        let policy = NetworkPolicy::Random {
            net: RandomNetwork {
                drop_prob: 1.0,
                horizon: 10,
                ..RandomNetwork::default()
            },
            cuts: Vec::new(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(
            policy.decide(3, 1, 2, MessageKind::Read, &mut rng),
            Decision::Drop("loss")
        );
        for _ in 0..100 {
            match policy.decide(10, 1, 2, MessageKind::Read, &mut rng) {
                Decision::DeliverAt(t) => assert!((11..=13).contains(&t)),
                d => panic!("unexpected {d:?}"),
            }
        }
    }

    #[test]
    fn partitions_cut_links_both_ways_before_the_horizon() {
        let net = RandomNetwork {
            horizon: 50,
            partitions: 20,
            max_partition: 30,
            ..RandomNetwork::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cuts = net.draw_partitions(&[1, 2, 3, 4], &mut rng);
        assert!(!cuts.is_empty());
        for r in &cuts {
            assert!(r.start < r.until.unwrap() && r.until.unwrap() <= 50);
            let (p, q) = (r.from.unwrap(), r.to.unwrap());
            assert_ne!(p, q);
            assert!(cuts
                .iter()
                .any(|o| o.from == Some(q) && o.to == Some(p) && o.start == r.start));
        }
        let first = cuts[0].clone();
        let policy = NetworkPolicy::Random { net, cuts };
        let d = policy.decide(
            first.start,
            first.from.unwrap(),
            first.to.unwrap(),
            MessageKind::Write,
            &mut rng,
        );
        assert_eq!(d, Decision::Drop("partition"));
    }
}

//! Quorum-call engines.
//!
//! Each engine owns one logical quorum call: it broadcasts the request,
//! deduplicates replies by sender, retransmits to the replicas it still
//! needs on every timer tick and reports completion exactly once.
//!
//! Hop depth: requests of a phase are sent at `base + 1`, replies come back
//! one hop deeper, and a phase finishes at the deepest reply it counted.

use std::collections::BTreeMap;

use crate::types::{
    fresh_request_id, CrashVector, IdCounter, Incarnation, Message, ProcessId, ReadPayload, ReadReq, RequestId,
    WriteReq,
};

use super::{cv_from_payload, Effects, Note};

/// When a read quorum call may stop collecting replies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadRule {
    /// A fixed number of distinct responders.
    Fixed(usize),
    /// `f + min(s, m_r) + 1` responders, where `s` counts responders that
    /// flagged themselves suspicious.
    Suspicion { f: usize, m_r: usize },
}

impl ReadRule {
    #[allow(clippy::int_plus_one)]
    fn satisfied(&self, acks: &BTreeMap<ProcessId, (ReadPayload, u32)>) -> bool {
        match *self {
            ReadRule::Fixed(q) => acks.len() >= q,
            ReadRule::Suspicion { f, m_r } => {
                let s = acks
                    .values()
                    .filter(|(p, _)| matches!(p, ReadPayload::Flagged { suspicious: true, .. }))
                    .count();
                acks.len() >= f + s.min(m_r) + 1
            }
        }
    }
}

/// `read_quorum(req)`: collect replies from a quorum of distinct replicas.
#[derive(Debug, Clone)]
pub struct ReadQuorum {
    pub id: RequestId,
    pub req: ReadReq,
    rule: ReadRule,
    targets: Vec<ProcessId>,
    acks: BTreeMap<ProcessId, (ReadPayload, u32)>,
    base: u32,
    depth: u32,
    done: bool,
    pub started_step: u64,
}

impl ReadQuorum {
    pub fn start(
        id: RequestId,
        req: ReadReq,
        rule: ReadRule,
        targets: Vec<ProcessId>,
        base: u32,
        fx: &mut Effects,
    ) -> Self {
        let rq = ReadQuorum {
            id,
            req,
            rule,
            targets,
            acks: BTreeMap::new(),
            base,
            depth: base,
            done: false,
            started_step: fx.step,
        };
        fx.note(Note::ReadQuorumStarted { id, req });
        rq.retransmit(fx);
        rq
    }

    /// Re-sends the request to every target that has not replied yet.
    pub fn retransmit(&self, fx: &mut Effects) {
        if self.done {
            return;
        }
        for &to in &self.targets {
            if !self.acks.contains_key(&to) {
                fx.send(
                    to,
                    Message::Read {
                        id: self.id,
                        req: self.req,
                    },
                    self.base + 1,
                );
            }
        }
    }

    /// Records a reply; returns true when this reply completes the call.
    pub fn on_ack(&mut self, sender: ProcessId, payload: &ReadPayload, depth: u32, fx: &mut Effects) -> bool {
        if self.done || self.acks.contains_key(&sender) {
            return false;
        }
        self.acks.insert(sender, (payload.clone(), depth));
        if !self.rule.satisfied(&self.acks) {
            return false;
        }
        self.done = true;
        self.depth = self.acks.values().map(|(_, d)| *d).max().unwrap_or(self.base);
        fx.note(Note::ReadQuorumDone {
            id: self.id,
            req: self.req,
            replies: self.replies(),
        });
        true
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn replies(&self) -> Vec<(ProcessId, ReadPayload)> {
        self.acks.iter().map(|(j, (p, _))| (*j, p.clone())).collect()
    }

    pub fn payloads(&self) -> impl Iterator<Item = &ReadPayload> {
        self.acks.values().map(|(p, _)| p)
    }
}

/// `write_quorum(req)` without crash vectors: count distinct acknowledgers.
#[derive(Debug, Clone)]
pub struct PlainWriteQuorum {
    pub id: RequestId,
    pub req: WriteReq,
    q_w: usize,
    targets: Vec<ProcessId>,
    acks: BTreeMap<ProcessId, (u64, u32)>,
    base: u32,
    depth: u32,
    done: bool,
}

impl PlainWriteQuorum {
    pub fn start(
        id: RequestId,
        req: WriteReq,
        q_w: usize,
        targets: Vec<ProcessId>,
        base: u32,
        fx: &mut Effects,
    ) -> Self {
        let wq = PlainWriteQuorum {
            id,
            req,
            q_w,
            targets,
            acks: BTreeMap::new(),
            base,
            depth: base,
            done: false,
        };
        fx.note(Note::WriteQuorumStarted { id, req });
        wq.retransmit(fx);
        wq
    }

    pub fn retransmit(&self, fx: &mut Effects) {
        if self.done {
            return;
        }
        for &to in &self.targets {
            if !self.acks.contains_key(&to) {
                fx.send(
                    to,
                    Message::Write {
                        id: self.id,
                        req: self.req,
                        inc: None,
                    },
                    self.base + 1,
                );
            }
        }
    }

    pub fn on_ack(&mut self, sender: ProcessId, depth: u32, sent_step: u64, fx: &mut Effects) -> bool {
        if self.done || self.acks.contains_key(&sender) {
            return false;
        }
        self.acks.insert(sender, (sent_step, depth));
        if self.acks.len() < self.q_w {
            return false;
        }
        self.done = true;
        self.depth = self.acks.values().map(|(_, d)| *d).max().unwrap_or(self.base);
        fx.note(Note::WriteQuorumDone {
            id: self.id,
            req: self.req,
            quorum: self.acks.iter().map(|(j, (s, _))| (*j, *s)).collect(),
            cv_read_step: None,
            rounds: 1,
        });
        true
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct AckInfo {
    inc: Incarnation,
    sent_step: u64,
    depth: u32,
}

/// Crash-consistent `write_quorum(req)`.
///
/// Each round sends `WRITE(id, req, cv[z])` to every replica outside the
/// validated set `Q`, gathers new acknowledgers `M` until `|Q ∪ M| >= q_w`,
/// merges a fresh crash vector into `cv` and keeps only the responders whose
/// reported incarnation is at least `cv[j]`.
#[derive(Debug, Clone)]
pub struct CcWriteQuorum {
    pub id: RequestId,
    pub req: WriteReq,
    owner: ProcessId,
    q_w: usize,
    q_r: usize,
    targets: Vec<ProcessId>,
    q: BTreeMap<ProcessId, AckInfo>,
    m: BTreeMap<ProcessId, AckInfo>,
    piggybacked: BTreeMap<ProcessId, CrashVector>,
    cv: CrashVector,
    cv_read: Option<ReadQuorum>,
    cv_read_step: Option<u64>,
    rounds: u32,
    base: u32,
    depth: u32,
    done: bool,
}

impl CcWriteQuorum {
    #[allow(clippy::too_many_arguments)]
    pub fn start(
        id: RequestId,
        req: WriteReq,
        owner: ProcessId,
        q_w: usize,
        q_r: usize,
        targets: Vec<ProcessId>,
        base: u32,
        fx: &mut Effects,
    ) -> Self {
        let n = targets.iter().copied().max().unwrap_or(0) as usize;
        let wq = CcWriteQuorum {
            id,
            req,
            owner,
            q_w,
            q_r,
            targets,
            q: BTreeMap::new(),
            m: BTreeMap::new(),
            piggybacked: BTreeMap::new(),
            cv: CrashVector::zeros(n),
            cv_read: None,
            cv_read_step: None,
            rounds: 1,
            base,
            depth: base,
            done: false,
        };
        fx.note(Note::WriteQuorumStarted { id, req });
        wq.send_round(fx);
        wq
    }

    fn send_round(&self, fx: &mut Effects) {
        self.send_to(fx, |z| !self.q.contains_key(&z));
    }

    fn send_to(&self, fx: &mut Effects, pick: impl Fn(ProcessId) -> bool) {
        for &z in &self.targets {
            if pick(z) {
                fx.send(
                    z,
                    Message::Write {
                        id: self.id,
                        req: self.req,
                        inc: Some(self.cv.get(z)),
                    },
                    self.base + 1,
                );
            }
        }
    }

    pub fn retransmit(&self, fx: &mut Effects) {
        if self.done {
            return;
        }
        match &self.cv_read {
            Some(rq) => rq.retransmit(fx),
            // Replicas that already answered this round keep their ack.
            None => self.send_to(fx, |z| !self.q.contains_key(&z) && !self.m.contains_key(&z)),
        }
    }

    /// Id of the nested crash-vector read, while one is running.
    pub fn nested_read_id(&self) -> Option<RequestId> {
        self.cv_read.as_ref().map(|rq| rq.id)
    }

    fn union(&self) -> BTreeMap<ProcessId, AckInfo> {
        let mut all = self.q.clone();
        for (j, a) in &self.m {
            match all.get(j) {
                Some(prev) if prev.inc > a.inc => {}
                _ => {
                    all.insert(*j, *a);
                }
            }
        }
        all
    }

    /// Records a WRITE_ACK; returns true when the call completes.
    #[allow(clippy::too_many_arguments)]
    pub fn on_write_ack(
        &mut self,
        sender: ProcessId,
        inc: Option<Incarnation>,
        cv: Option<&CrashVector>,
        depth: u32,
        sent_step: u64,
        ids: &mut IdCounter,
        fx: &mut Effects,
    ) -> bool {
        if self.done {
            return false;
        }
        let info = AckInfo {
            inc: inc.unwrap_or(0),
            sent_step,
            depth,
        };
        match self.m.get(&sender) {
            Some(prev) if prev.inc > info.inc => {}
            _ => {
                self.m.insert(sender, info);
                if let Some(cv) = cv {
                    self.piggybacked.insert(sender, cv.clone());
                }
            }
        }
        if self.cv_read.is_some() || self.union().len() < self.q_w {
            return false;
        }
        if self.req.is_tsval() {
            let members: Vec<ProcessId> = self.union().keys().copied().collect();
            for j in members {
                if let Some(cv) = self.piggybacked.get(&j) {
                    self.cv.merge(cv);
                }
            }
            self.filter(fx)
        } else {
            self.depth = self
                .depth
                .max(self.union().values().map(|a| a.depth).max().unwrap_or(0));
            let rq_id = fresh_request_id(self.owner, ids);
            self.cv_read_step = Some(fx.step);
            self.cv_read = Some(ReadQuorum::start(
                rq_id,
                ReadReq::Cv,
                ReadRule::Fixed(self.q_r),
                self.targets.clone(),
                self.depth,
                fx,
            ));
            false
        }
    }

    /// Routes a READ_ACK of the nested crash-vector read; returns true when
    /// the whole write call completes.
    pub fn on_read_ack(
        &mut self,
        sender: ProcessId,
        id: RequestId,
        payload: &ReadPayload,
        depth: u32,
        fx: &mut Effects,
    ) -> bool {
        let Some(rq) = self.cv_read.as_mut() else {
            return false;
        };
        if rq.id != id || !rq.on_ack(sender, payload, depth, fx) {
            return false;
        }
        let rq = self.cv_read.take().expect("nested read present");
        for cv in rq.payloads().filter_map(cv_from_payload) {
            self.cv.merge(cv);
        }
        self.depth = self.depth.max(rq.depth());
        self.filter(fx)
    }

    fn filter(&mut self, fx: &mut Effects) -> bool {
        let all = self.union();
        self.depth = self.depth.max(all.values().map(|a| a.depth).max().unwrap_or(0));
        let (keep, drop): (Vec<_>, Vec<_>) = all.into_iter().partition(|(j, a)| a.inc >= self.cv.get(*j));
        if !drop.is_empty() {
            fx.note(Note::AcksDiscarded {
                id: self.id,
                replicas: drop.iter().map(|(j, _)| *j).collect(),
            });
        }
        self.q = keep.into_iter().collect();
        self.m.clear();
        if self.q.len() >= self.q_w {
            self.done = true;
            fx.note(Note::WriteQuorumDone {
                id: self.id,
                req: self.req,
                quorum: self.q.iter().map(|(j, a)| (*j, a.sent_step)).collect(),
                cv_read_step: self.cv_read_step,
                rounds: self.rounds,
            });
            return true;
        }
        self.rounds += 1;
        self.base = self.depth;
        self.send_round(fx);
        false
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn rounds(&self) -> u32 {
        self.rounds
    }

    /// Merged crash vector of the call.
    pub fn crash_vector(&self) -> &CrashVector {
        &self.cv
    }

    /// Validated responders and their reported incarnations.
    pub fn validated(&self) -> Vec<(ProcessId, Incarnation)> {
        self.q.iter().map(|(j, a)| (*j, a.inc)).collect()
    }
}

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::agent::AgentId;
use crate::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdConfig {
    pub initial_timeout: Tick,
    /// Upper bound for the adaptive timeout; must exceed the round trip 2Δ.
    pub cap: Tick,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            initial_timeout: 4,
            cap: 32,
        }
    }
}

impl FdConfig {
    /// Doublings needed before the timeout covers a round trip of `rtt`.
    pub fn doublings_to_cover(&self, rtt: Tick) -> u32 {
        let mut t = self.initial_timeout.max(1);
        let mut d = 0;
        while t < rtt && t < self.cap {
            t = (2 * t).min(self.cap);
            d += 1;
        }
        d
    }

    /// Tick after which no nonfaulty peer stays suspected, given GST, the
    /// largest pre-GST delay and the post-GST bound Δ.
    pub fn stabilization_ceiling(&self, gst: Tick, max_delay: Tick, delta: Tick) -> Tick {
        let d = self.doublings_to_cover(2 * delta) as u64;
        gst + max_delay + (d + 1) * (self.cap + 2 * delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FdEventKind {
    Suspect,
    Clear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FdEvent {
    pub tick: Tick,
    pub peer: AgentId,
    pub kind: FdEventKind,
    /// Timeout in force when the event happened (after doubling, for clears).
    pub timeout: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerStatus {
    pub last_response: Option<Tick>,
    pub timeout: Tick,
    pub suspected: bool,
    /// Pings sent since the last response, by correlation id.
    outstanding: BTreeMap<u16, Tick>,
    last_ping: Option<Tick>,
}

/// Ping-based detector with per-peer adaptive timeouts. A peer is suspected
/// when its oldest unanswered ping is `timeout` old; an answer to any ping
/// sent since the last answer clears the suspicion and doubles the timeout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailureDetector {
    config: FdConfig,
    peers: BTreeMap<AgentId, PeerStatus>,
    events: Vec<FdEvent>,
}

/// Bound on remembered unanswered pings per peer.
const MAX_OUTSTANDING: usize = 64;

impl FailureDetector {
    pub fn new(config: FdConfig, peers: impl IntoIterator<Item = AgentId>) -> Self {
        let peers = peers
            .into_iter()
            .map(|p| {
                (
                    p,
                    PeerStatus {
                        last_response: None,
                        timeout: config.initial_timeout.max(1),
                        suspected: false,
                        outstanding: BTreeMap::new(),
                        last_ping: None,
                    },
                )
            })
            .collect();
        Self {
            config,
            peers,
            events: Vec::new(),
        }
    }

    pub fn config(&self) -> &FdConfig {
        &self.config
    }

    pub fn is_suspected(&self, peer: AgentId) -> bool {
        self.peers.get(&peer).is_some_and(|s| s.suspected)
    }

    pub fn suspected(&self) -> BTreeSet<AgentId> {
        self.peers
            .iter()
            .filter(|(_, s)| s.suspected)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn status(&self, peer: AgentId) -> Option<&PeerStatus> {
        self.peers.get(&peer)
    }

    pub fn events(&self) -> &[FdEvent] {
        &self.events
    }

    /// Forgets outstanding pings, e.g. after a restart.
    pub fn reset(&mut self) {
        for s in self.peers.values_mut() {
            s.outstanding.clear();
            s.last_ping = None;
        }
    }

    /// Advances to `now`. `fresh_cid` supplies correlation ids; returns the
    /// pings to send as (peer, correlation id).
    pub fn step(&mut self, now: Tick, mut fresh_cid: impl FnMut() -> u16) -> Vec<(AgentId, u16)> {
        let mut pings = Vec::new();
        for (&peer, s) in self.peers.iter_mut() {
            let oldest = s.outstanding.values().min().copied();
            let due = match (oldest, s.last_ping) {
                (None, _) => true,
                (Some(first), Some(last)) => {
                    if now >= first + s.timeout && !s.suspected {
                        s.suspected = true;
                        self.events.push(FdEvent {
                            tick: now,
                            peer,
                            kind: FdEventKind::Suspect,
                            timeout: s.timeout,
                        });
                    }
                    now >= last + s.timeout
                }
                (Some(_), None) => true,
            };
            if due {
                let cid = fresh_cid();
                if s.outstanding.len() >= MAX_OUTSTANDING {
                    let oldest_cid = *s.outstanding.iter().min_by_key(|(_, t)| **t).expect("non-empty").0;
                    s.outstanding.remove(&oldest_cid);
                }
                s.outstanding.insert(cid, now);
                s.last_ping = Some(now);
                pings.push((peer, cid));
            }
        }
        pings
    }

    /// Handles a ping response. Returns whether it answered an outstanding ping.
    pub fn on_response(&mut self, from: AgentId, cid: u16, now: Tick) -> bool {
        let Some(s) = self.peers.get_mut(&from) else {
            return false;
        };
        if s.outstanding.remove(&cid).is_none() {
            return false;
        }
        s.outstanding.clear();
        s.last_response = Some(now);
        if s.suspected {
            s.suspected = false;
            s.timeout = (2 * s.timeout).min(self.config.cap);
            self.events.push(FdEvent {
                tick: now,
                peer: from,
                kind: FdEventKind::Clear,
                timeout: s.timeout,
            });
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: AgentId = AgentId(1);

    fn fd() -> FailureDetector {
        FailureDetector::new(FdConfig::default(), [P])
    }

    fn counter() -> impl FnMut() -> u16 {
        let mut c = 0;
        move || {
            c += 1;
            c
        }
    }

    #[test]
    fn responsive_peer_is_never_suspected() {
        let mut fd = fd();
        let mut cids = counter();
        for t in 0..100 {
            for (peer, cid) in fd.step(t, &mut cids) {
                assert!(fd.on_response(peer, cid, t + 2));
            }
        }
        assert!(fd.events().is_empty());
    }

    #[test]
    fn silence_leads_to_suspicion_at_timeout() {
        let mut fd = fd();
        let mut cids = counter();
        fd.step(0, &mut cids);
        for t in 1..4 {
            fd.step(t, &mut cids);
            assert!(!fd.is_suspected(P));
        }
        fd.step(4, &mut cids);
        assert!(fd.is_suspected(P));
    }

    #[test]
    fn late_answer_clears_and_doubles() {
        let mut fd = fd();
        let mut cids = counter();
        let first = fd.step(0, &mut cids)[0].1;
        fd.step(4, &mut cids);
        assert!(fd.is_suspected(P));
        assert!(fd.on_response(P, first, 6));
        assert!(!fd.is_suspected(P));
        assert_eq!(fd.status(P).unwrap().timeout, 8);
        assert!(!fd.on_response(P, first, 7));
        let kinds: Vec<_> = fd.events().iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![FdEventKind::Suspect, FdEventKind::Clear]);
    }

    #[test]
    fn timeout_is_capped() {
        let config = FdConfig {
            initial_timeout: 4,
            cap: 10,
        };
        let mut fd = FailureDetector::new(config, [P]);
        let mut cids = counter();
        let mut t = 0;
        for _ in 0..5 {
            let cid = fd.step(t, &mut cids)[0].1;
            t += fd.status(P).unwrap().timeout;
            fd.step(t, &mut cids);
            fd.on_response(P, cid, t + 1);
            t += 2;
        }
        assert_eq!(fd.status(P).unwrap().timeout, 10);
    }

    #[test]
    fn ceiling_arithmetic() {
        let c = FdConfig::default();
        assert_eq!(c.doublings_to_cover(10), 2);
        assert_eq!(c.stabilization_ceiling(50, 20, 5), 50 + 20 + 3 * (32 + 10));
    }
}

use std::collections::HashMap;

use muacp::agent::{AgentId, ChannelId, TransitionLabel};
use muacp::simnet::{metrics, EventKind, Network, SimConfig};
use muacp::wire::{Message, Verb};
use proptest::prelude::*;

fn label(from: u32, to: u32, id: u16) -> TransitionLabel {
    let (a, b) = (AgentId(from), AgentId(to));
    TransitionLabel {
        sender: a,
        receiver: b,
        channel: ChannelId::between(a, b),
        message: Message::new(Verb::Tell).with_message_id(id),
    }
}

prop_compose! {
    fn config()(
        gst in 0u64..60,
        delta in 1u64..10,
        drop_rate in 0.0f64..0.5,
        dup_rate in 0.0f64..0.3,
        lo in 1u64..5,
        span in 0u64..30,
        seed in any::<u64>(),
    ) -> SimConfig {
        SimConfig { gst, delta, drop_rate, dup_rate, delay_range: (lo, lo + span), seed, ..SimConfig::default() }
    }
}

/// Sends `sends` (tick, from, to) and drains the network.
fn drive(config: SimConfig, sends: &[(u64, u32, u32)]) -> Network {
    let mut net = Network::new(config);
    let mut sends = sends.to_vec();
    sends.sort_by_key(|s| s.0);
    let mut next = 0;
    let mut t = 0;
    while next < sends.len() || !net.is_idle() {
        while next < sends.len() && sends[next].0 == t {
            let (_, from, to) = sends[next];
            net.schedule_send(label(from, to, next as u16), t).unwrap();
            next += 1;
        }
        net.deliver_due(t);
        t += 1;
    }
    net
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn network_log_invariants(config in config(), sends in prop::collection::vec((0u64..80, 0u32..4, 0u32..4), 0..60)) {
        let gst = config.gst;
        let delta = config.delta;
        let drop_rate = config.drop_rate;
        let net = drive(config, &sends);
        let log = net.log();
        prop_assert!(log.ticks_monotone());
        prop_assert!(log.no_spurious_creation());

        let mut delivered: HashMap<u64, u64> = HashMap::new();
        for r in log.of_kind(EventKind::Deliver) {
            let sent = r.sent_at.unwrap();
            prop_assert!(r.tick > sent);
            if sent >= gst {
                prop_assert!(r.tick - sent <= delta, "post-GST delay {} > {}", r.tick - sent, delta);
            }
            *delivered.entry(r.packet.unwrap()).or_default() += 1;
        }
        // Each packet id is delivered at most once; duplicates get fresh ids.
        prop_assert!(delivered.values().all(|&c| c == 1));
        for r in log.of_kind(EventKind::Drop) {
            if r.reason.as_deref() == Some("loss") {
                prop_assert!(drop_rate > 0.0 && r.sent_at.unwrap() < gst);
            }
        }
        let m = metrics(log);
        let sends_logged = log.of_kind(EventKind::Send).count() as u64;
        prop_assert_eq!(m.summary.sends, sends_logged);
        prop_assert_eq!(m.summary.deliveries + m.summary.drops, m.summary.sends + m.summary.dups);
    }

    #[test]
    fn same_seed_same_log(config in config(), sends in prop::collection::vec((0u64..40, 0u32..3, 0u32..3), 0..30)) {
        let a = drive(config.clone(), &sends);
        let b = drive(config, &sends);
        prop_assert_eq!(a.log().to_jsonl(), b.log().to_jsonl());
    }
}

#[test]
fn lossless_channel_delivers_everything() {
    let sends: Vec<_> = (0..50).map(|i| (i, (i % 3) as u32, ((i + 1) % 3) as u32)).collect();
    let net = drive(SimConfig::default(), &sends);
    assert_eq!(net.log().of_kind(EventKind::Deliver).count(), 50);
    assert_eq!(net.log().of_kind(EventKind::Drop).count(), 0);
}

use super::*;
use crate::resources::{Amount, CostModel, ResourceBudget, ResourceVector};

const A: AgentId = AgentId(1);
const B: AgentId = AgentId(2);
const C: AgentId = AgentId(3);

fn agent(id: AgentId) -> AgentState {
    AgentState::new(id, ResourceBudget::unlimited(), AgentConfig::default())
}

fn lit(s: &str) -> Literal {
    s.parse().unwrap()
}

fn deliver(from: &mut AgentState, to: &mut AgentState, m: Message, now: Tick) -> Vec<Envelope> {
    let model = CostModel::default();
    let label = from.send(m, to.id(), &model, now).unwrap();
    to.receive(&label, &model, now).unwrap()
}

#[test]
fn send_charges_wire_size_and_records_history() {
    let model = CostModel::default();
    let limit = ResourceVector::uniform(Amount::units(1000));
    let mut a = AgentState::new(A, ResourceBudget::new(limit), AgentConfig::default());
    let m = compose::tell(&lit("p(1)"));
    let size = wire::wire_size(&m).unwrap() as u64;
    a.send(m, B, &model, 0).unwrap();
    assert_eq!(a.history().len(), 1);
    assert_eq!(a.budget.remaining().bandwidth, Amount::units(1000 - size));
    assert_eq!(a.budget.remaining().memory, Amount::units(1000));
}

#[test]
fn infeasible_send_leaves_state_unchanged() {
    let model = CostModel::default();
    let limit = ResourceVector::units(10, 0, 10, 10);
    let mut a = AgentState::new(A, ResourceBudget::new(limit), AgentConfig::default());
    let before = a.budget.clone();
    let err = a.send(compose::ping(), B, &model, 0).unwrap_err();
    assert!(matches!(err, AgentError::Infeasible(_)));
    assert_eq!(a.budget, before);
    assert!(a.history().is_empty());
    assert_eq!(a.stats().sent, 0);
}

#[test]
fn history_ring_keeps_newest() {
    let model = CostModel::default();
    let config = AgentConfig {
        history_cap: 2,
        ..AgentConfig::default()
    };
    let mut a = AgentState::new(A, ResourceBudget::unlimited(), config);
    for id in 1..=3u16 {
        a.send(compose::ping().with_message_id(id), B, &model, id as Tick)
            .unwrap();
    }
    let ids: Vec<u16> = a.history().iter().map(|h| h.message.header.message_id).collect();
    assert_eq!(ids, vec![2, 3]);
}

#[test]
fn self_addressed_and_misrouted() {
    let model = CostModel::default();
    let mut a = agent(A);
    assert_eq!(
        a.send(compose::ping(), A, &model, 0).unwrap_err(),
        AgentError::SelfAddressed
    );
    let mut b = agent(B);
    let label = a.send(compose::ping(), C, &model, 0).unwrap();
    assert_eq!(b.receive(&label, &model, 0).unwrap_err(), AgentError::WrongReceiver(C));
}

#[test]
fn tell_inserts_into_kb() {
    let (mut a, mut b) = (agent(A), agent(B));
    let replies = deliver(&mut a, &mut b, compose::tell(&lit("p(1)")), 0);
    assert!(replies.is_empty());
    assert!(b.kb.holds(&lit("p(1)")));
    deliver(&mut a, &mut b, compose::tell(&lit("p(1)")), 1);
    assert_eq!(b.kb.len(), 1);
    deliver(&mut a, &mut b, compose::tell(&lit("¬p(1)")), 2);
    assert!(b.kb.holds(&lit("¬p(1)")));
    assert!(!b.kb.holds(&lit("p(1)")));
}

#[test]
fn ping_is_echoed_with_same_correlation() {
    let (mut a, mut b) = (agent(A), agent(B));
    let replies = deliver(&mut a, &mut b, compose::ping().with_correlation(77), 0);
    assert_eq!(replies.len(), 1);
    let r = &replies[0].message;
    assert_eq!(r.verb(), Verb::Ping);
    assert!(r.is_response());
    assert_eq!(r.header.correlation_id, 77);
    assert_eq!(replies[0].to, A);
}

#[test]
fn ask_known_literal_answers_with_tell() {
    let (mut a, mut b) = (agent(A), agent(B));
    b.kb.tell(lit("temp(kitchen,21)"));
    let cid = a.fresh_correlation();
    let replies = deliver(
        &mut a,
        &mut b,
        compose::ask(&lit("temp(kitchen,21)")).with_correlation(cid),
        0,
    );
    assert_eq!(a.pending_asks().len(), 1);
    assert_eq!(replies.len(), 1);
    let r = &replies[0].message;
    assert_eq!(r.verb(), Verb::Tell);
    assert_eq!(r.header.correlation_id, cid);
    assert_eq!(Literal::from_bytes(&r.payload).unwrap(), lit("temp(kitchen,21)"));

    let label = b.send(r.clone(), A, &CostModel::default(), 1).unwrap();
    a.receive(&label, &CostModel::default(), 1).unwrap();
    assert!(a.pending_asks().is_empty());
    assert!(a.timers().is_empty());
    assert!(a.kb.holds(&lit("temp(kitchen,21)")));
}

#[test]
fn ask_negated_and_unknown() {
    let (mut a, mut b) = (agent(A), agent(B));
    b.kb.tell(lit("¬open(door)"));
    let r = deliver(&mut a, &mut b, compose::ask(&lit("open(door)")), 0);
    assert_eq!(Literal::from_bytes(&r[0].message.payload).unwrap(), lit("¬open(door)"));
    let r = deliver(&mut a, &mut b, compose::ask(&lit("lamp(on)")).with_correlation(9), 1);
    assert_eq!(r[0].message.option(OptionType::ERR).unwrap().value, ERR_UNKNOWN);
}

#[test]
fn ask_action_reports_done() {
    let (mut a, mut b) = (agent(A), agent(B));
    let r = deliver(&mut a, &mut b, compose::ask_action(&lit("open(valve)")), 0);
    let done = Literal::from_bytes(&r[0].message.payload).unwrap();
    assert_eq!(done, lit("done(open(valve))"));
    assert!(b.kb.holds(&done));
}

#[test]
fn bad_content_yields_error_ping() {
    let (mut a, mut b) = (agent(A), agent(B));
    let m = compose::tell(&lit("p"))
        .with_payload(b"p(".to_vec())
        .with_message_id(0x0abc);
    let r = deliver(&mut a, &mut b, m, 0);
    assert_eq!(r.len(), 1);
    let m = &r[0].message;
    assert_eq!(m.verb(), Verb::Ping);
    assert!(m.is_error() && m.is_response());
    assert_eq!(m.option(OptionType::ERR).unwrap().value, vec![0x0a, 0xbc]);
    assert_eq!(b.stats().malformed, 1);

    let label = b.send(m.clone(), A, &CostModel::default(), 1).unwrap();
    a.receive(&label, &CostModel::default(), 1).unwrap();
    let notice = a.last_error().unwrap();
    assert_eq!(notice.from, B);
    assert_eq!(notice.original_message, Some(0x0abc));
}

#[test]
fn observe_then_publish_notifies_each_subscriber_once() {
    let (mut pub_, mut s1, mut s2) = (agent(A), agent(B), agent(C));
    deliver(&mut s1, &mut pub_, compose::observe("temp"), 0);
    deliver(&mut s2, &mut pub_, compose::observe("temp"), 0);
    deliver(&mut s1, &mut pub_, compose::observe("temp"), 1);
    deliver(&mut s1, &mut pub_, compose::observe("door"), 1);
    let out = pub_.publish("temp", &lit("temp(21)"));
    let mut to: Vec<AgentId> = out.iter().map(|e| e.to).collect();
    to.sort();
    assert_eq!(to, vec![B, C]);
    assert!(pub_.publish("none", &lit("x")).is_empty());
}

#[test]
fn observe_without_topic_is_bad_content() {
    let (mut a, mut b) = (agent(A), agent(B));
    let r = deliver(&mut a, &mut b, Message::new(Verb::Observe), 0);
    assert!(r[0].message.is_error());
}

#[test]
fn fire_timers_identity_when_nothing_due() {
    let mut a = agent(A);
    a.send(compose::ask(&lit("p")), B, &CostModel::default(), 0).unwrap();
    let before = a.pending_asks().clone();
    assert!(a.fire_timers(5).is_empty());
    assert_eq!(a.pending_asks(), &before);
}

#[test]
fn expired_ask_produces_local_timeout() {
    let mut a = agent(A);
    let m = compose::deadline(compose::ask(&lit("p")).with_correlation(4), 10);
    a.send(m, B, &CostModel::default(), 0).unwrap();
    assert!(a.invariants_hold());
    let out = a.fire_timers(10);
    assert!(a.pending_asks().is_empty());
    assert_eq!(out.local.len(), 1);
    let note = &out.local[0];
    assert!(note.is_error());
    assert_eq!(note.header.correlation_id, 4);
    assert_eq!(note.option(OptionType::ERR).unwrap().value, ERR_TIMEOUT);
    assert_eq!(a.stats().timeouts, 1);
}

#[test]
fn qos1_retransmits_with_same_message_id_until_acked() {
    let model = CostModel::default();
    let mut a = agent(A);
    let mut b = agent(B);
    let m = compose::tell(&lit("p"))
        .with_qos(QoS::AtLeastOnce)
        .with_message_id(41)
        .with_correlation(7);
    a.send(m, B, &model, 0).unwrap();
    let interval = a.config().retransmit_interval;
    let out = a.fire_timers(interval);
    assert_eq!(out.retransmit.len(), 1);
    let copy = &out.retransmit[0];
    assert!(copy.retransmit);
    assert_eq!(copy.message.header.message_id, 41);

    let label = a.send_envelope(copy.clone(), &model, interval).unwrap();
    let replies = b.receive(&label, &model, interval).unwrap();
    assert_eq!(replies.len(), 1);
    assert!(replies[0].message.is_response());
    assert_eq!(replies[0].message.header.correlation_id, 7);
    let ack = b.send(replies[0].message.clone(), A, &model, interval + 1).unwrap();
    a.receive(&ack, &model, interval + 1).unwrap();
    assert_eq!(a.unacked_count(), 0);
    assert!(a.fire_timers(10 * interval).is_empty());
    assert_eq!(a.stats().retransmissions, 1);
}

#[test]
fn retransmission_gives_up_after_limit() {
    let model = CostModel::default();
    let config = AgentConfig {
        max_retransmits: 2,
        retransmit_interval: 1,
        ..AgentConfig::default()
    };
    let mut a = AgentState::new(A, ResourceBudget::unlimited(), config);
    a.send(compose::ping().with_qos(QoS::AtLeastOnce), B, &model, 0)
        .unwrap();
    let copies: usize = (1..10).map(|t| a.fire_timers(t).retransmit.len()).sum();
    assert_eq!(copies, 2);
    assert_eq!(a.stats().gave_up, 1);
}

#[test]
fn channel_ids_are_directed() {
    assert_ne!(ChannelId::between(A, B), ChannelId::between(B, A));
    assert_eq!(ChannelId::between(A, B).0, (1u64 << 32) | 2);
}

#[test]
fn steps_are_deterministic() {
    let run = || {
        let (mut a, mut b) = (agent(A), agent(B));
        let mut out = Vec::new();
        for i in 0..5u16 {
            out.extend(deliver(
                &mut a,
                &mut b,
                compose::ask(&lit("p")).with_correlation(i),
                i as Tick,
            ));
        }
        out
    };
    assert_eq!(run(), run());
}

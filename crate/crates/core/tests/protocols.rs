use std::path::PathBuf;

use muacp::fipa::{
    check_trace_inclusion, check_trace_inclusion_with, procedural_bound_check, ConversationAutomaton, Tau,
};

fn protocols_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../protocols")
}

fn load(name: &str) -> ConversationAutomaton {
    let text = std::fs::read_to_string(protocols_dir().join(name)).unwrap();
    ConversationAutomaton::from_json(&text).unwrap()
}

const SHIPPED: [&str; 5] = [
    "inform.json",
    "request_response.json",
    "query.json",
    "subscribe_notify.json",
    "contract_net.json",
];

#[test]
fn shipped_protocols_are_included_at_length_eight() {
    for name in SHIPPED {
        let auto = load(name);
        let report = check_trace_inclusion(&auto, 8).unwrap();
        assert!(report.traces_checked > 0, "{name}");
        assert!(report.holds(), "{name}: {:#?}", report.uncovered);
    }
}

#[test]
fn shipped_protocols_respect_the_state_bound() {
    for name in SHIPPED {
        let auto = load(name);
        let report = procedural_bound_check(&auto).unwrap();
        assert!(report.max_messages_observed <= report.k, "{name}");
        assert!(report.runs > 0, "{name}");
    }
}

#[test]
fn contract_net_shape() {
    let auto = load("contract_net.json");
    assert_eq!(auto.nesting_depth, 2);
    let traces = auto.enumerate_traces(8).unwrap();
    assert!(traces.iter().any(|t| t.len() == 6));
    assert_eq!(procedural_bound_check(&auto).unwrap().max_messages_observed, 6);
}

#[test]
fn mutated_translation_is_caught() {
    let tau = Tau::from_json(&std::fs::read_to_string(protocols_dir().join("mutated_tau.json")).unwrap()).unwrap();
    let report = check_trace_inclusion_with(&load("request_response.json"), 8, &tau).unwrap();
    assert!(!report.holds());
}

#[test]
fn concurrent_conversations_interleave() {
    let product = load("inform.json").product(&load("request_response.json")).unwrap();
    let report = check_trace_inclusion(&product, 8).unwrap();
    assert!(report.holds(), "{:#?}", report.uncovered);
}

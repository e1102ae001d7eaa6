use muacp::consensus::{explore, run_campaign, run_decree, CampaignConfig, ExploreConfig};

#[test]
fn lossless_three_nodes_use_twelve_phase_messages() {
    let cfg = CampaignConfig {
        n: 3,
        proposers: 1,
        ..CampaignConfig::default()
    };
    let o = run_decree(&cfg, 1);
    assert!(o.safe() && o.all_survivors_decided, "{o:?}");
    assert_eq!(o.counters.phase_messages, 12);
    assert_eq!(o.counters.rounds, 1);
}

#[test]
fn five_nodes_without_faults_all_decide() {
    let cfg = CampaignConfig {
        n: 5,
        seeds: (0..20).collect(),
        drop_rate: 0.05,
        ..CampaignConfig::default()
    };
    let r = run_campaign(&cfg);
    assert_eq!(r.summary.safety_violations, 0);
    assert_eq!(
        r.summary.undecided_runs,
        0,
        "{:?}",
        r.outcomes.iter().find(|o| !o.all_survivors_decided)
    );
}

#[test]
fn tolerated_crashes_preserve_safety_and_liveness() {
    let cfg = CampaignConfig {
        n: 5,
        crashes: 2,
        drop_rate: 0.1,
        dup_rate: 0.05,
        gst: 100,
        delay_range: (1, 20),
        seeds: (0..40).collect(),
        ..CampaignConfig::default()
    };
    let r = run_campaign(&cfg);
    assert_eq!(r.summary.safety_violations, 0);
    assert_eq!(
        r.summary.undecided_runs,
        0,
        "{:?}",
        r.outcomes.iter().find(|o| !o.all_survivors_decided)
    );
    assert_eq!(
        r.summary.fd_violations,
        0,
        "{:?}",
        r.outcomes
            .iter()
            .find(|o| !o.fd.completeness_ok || !o.fd.accuracy_ok)
            .map(|o| &o.fd)
    );
}

#[test]
fn four_nodes_two_crashes_never_disagree() {
    let cfg = CampaignConfig {
        n: 4,
        crashes: 2,
        drop_rate: 0.1,
        max_ticks: 1_500,
        seeds: (0..30).collect(),
        ..CampaignConfig::default()
    };
    let r = run_campaign(&cfg);
    assert_eq!(r.summary.safety_violations, 0);
}

#[test]
fn crash_recovery_with_stable_storage_is_safe() {
    let cfg = CampaignConfig {
        n: 3,
        crashes: 1,
        crash_recovery: true,
        drop_rate: 0.05,
        seeds: (0..30).collect(),
        ..CampaignConfig::default()
    };
    let r = run_campaign(&cfg);
    assert_eq!(r.summary.safety_violations, 0);
    assert_eq!(r.summary.undecided_runs, 0);
}

#[test]
fn explorer_finds_no_violation() {
    let r = explore(&ExploreConfig {
        max_messages: 14,
        ..ExploreConfig::default()
    });
    assert!(r.holds(), "{r:?}");
}

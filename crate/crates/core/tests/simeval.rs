mod common;

use dcrec::infer::{CloudGateway, CloudView, FusionConfig};
use dcrec::request::{calibrate_threshold, RequestPolicy};
use dcrec::simeval::{
    calibration_scores, reports_csv, run_ablation, run_episode, run_episode_with, standard_arms, InferenceArm,
    SimConfig, SimReport,
};
use dcrec::Error;

fn sim(fx: &common::Fixture, arm: InferenceArm) -> SimConfig {
    SimConfig {
        k: fx.cfg.sim.k,
        delta_t: fx.cfg.data.delta_t,
        fusion: fx.cfg.fusion,
        arm,
        metrics_k: fx.cfg.sim.metrics_k.clone(),
        seed: 1,
        ..SimConfig::default()
    }
}

fn ranks(r: &SimReport) -> Vec<Option<usize>> {
    r.outcomes.iter().map(|o| o.rank).collect()
}

#[test]
fn zero_budget_equals_no_requests() {
    let fx = common::fixture(11);
    let base = sim(&fx, InferenceArm::BothFusion);
    let none = run_episode(&fx.cloud, &fx.device, &fx.splits, &fx.groups.test, &base).unwrap();
    let scores = calibration_scores(&fx.cloud, &fx.device, &fx.splits, &fx.groups.calibration, base.k, base.delta_t).unwrap();
    let cal = calibrate_threshold(&scores, 0.0).unwrap();
    for policy in [RequestPolicy::inconsistency(0.0, cal.threshold), RequestPolicy::random(0.0, 3)] {
        let cfg = SimConfig { policy: Some(policy), ..base.clone() };
        let r = run_episode(&fx.cloud, &fx.device, &fx.splits, &fx.groups.test, &cfg).unwrap();
        assert_eq!(r.request_count, 0);
        assert_eq!((r.bytes_up, r.bytes_down), (0, 0));
        assert_eq!(ranks(&r), ranks(&none));
        assert_eq!(r.metrics, none.metrics);
    }
}

#[test]
fn full_random_budget_equals_realtime_cloud() {
    let fx = common::fixture(12);
    let base = sim(&fx, InferenceArm::BothFusion);
    let rt = SimConfig { realtime_cloud: true, ..base.clone() };
    let always = SimConfig { policy: Some(RequestPolicy::random(1.0, 9)), ..base };
    let a = run_episode(&fx.cloud, &fx.device, &fx.splits, &fx.groups.test, &rt).unwrap();
    let b = run_episode(&fx.cloud, &fx.device, &fx.splits, &fx.groups.test, &always).unwrap();
    assert_eq!(b.request_rate, 1.0);
    assert_eq!(ranks(&a), ranks(&b));
    assert_eq!(a.metrics, b.metrics);
    assert_eq!((a.bytes_up, a.bytes_down), (b.bytes_up, b.bytes_down));
}

#[test]
fn cloud_only_is_the_slate_order_and_alpha_one() {
    let fx = common::fixture(13);
    let cloud_only = run_episode(&fx.cloud, &fx.device, &fx.splits, &fx.groups.test, &sim(&fx, InferenceArm::CloudOnly)).unwrap();
    for o in &cloud_only.outcomes {
        let lagged = &fx.splits.user(o.user).unwrap().lagged;
        let slate = fx.cloud.recall_topk(lagged, fx.cfg.sim.k).unwrap();
        let target = fx.splits.user(o.user).unwrap().test_target;
        assert_eq!(o.rank, slate.items().iter().position(|&q| q == target));
    }
    let alpha_one = SimConfig {
        fusion: FusionConfig::with_alpha(1.0),
        ..sim(&fx, InferenceArm::BothFusion)
    };
    let fused = run_episode(&fx.cloud, &fx.device, &fx.splits, &fx.groups.test, &alpha_one).unwrap();
    assert_eq!(ranks(&fused), ranks(&cloud_only));
}

#[test]
fn no_fusion_is_alpha_zero() {
    let fx = common::fixture(14);
    let a = run_episode(&fx.cloud, &fx.device, &fx.splits, &fx.groups.test, &sim(&fx, InferenceArm::BothNoFusion)).unwrap();
    let zero = SimConfig {
        fusion: FusionConfig::with_alpha(0.0),
        ..sim(&fx, InferenceArm::BothFusion)
    };
    let b = run_episode(&fx.cloud, &fx.device, &fx.splits, &fx.groups.test, &zero).unwrap();
    assert_eq!(ranks(&a), ranks(&b));
}

#[test]
fn cloud_sees_realtime_data_only_with_a_grant() {
    let fx = common::fixture(15);
    let users = &fx.groups.test;
    let scores = calibration_scores(&fx.cloud, &fx.device, &fx.splits, &fx.groups.calibration, fx.cfg.sim.k, 2).unwrap();
    let threshold = calibrate_threshold(&scores, 0.3).unwrap().threshold;
    let policies = [
        None,
        Some(RequestPolicy::inconsistency(0.3, threshold)),
        Some(RequestPolicy::random(0.3, 1)),
    ];
    for arm in [InferenceArm::CloudOnly, InferenceArm::BothNoFusion, InferenceArm::BothFusion, InferenceArm::DeviceOnly] {
        for policy in policies {
            let gw = CloudGateway::new(&fx.cloud, &fx.splits).with_audit();
            let cfg = SimConfig { policy, ..sim(&fx, arm) };
            let r = run_episode_with(&gw, &fx.device, users, &cfg).unwrap();
            let log = gw.audit_log();
            if arm == InferenceArm::DeviceOnly {
                assert!(log.is_empty());
                continue;
            }
            for o in &r.outcomes {
                let mine: Vec<CloudView> = log.iter().filter(|a| a.user == o.user).map(|a| a.view).collect();
                let want = if o.requested {
                    vec![CloudView::Lagged, CloudView::Realtime]
                } else {
                    vec![CloudView::Lagged]
                };
                assert_eq!(mine, want, "user {} under {arm:?} {policy:?}", o.user);
            }
            let realtime = log.iter().filter(|a| a.view == CloudView::Realtime).count();
            assert_eq!(realtime, r.request_count);
        }
    }
}

#[test]
fn bytes_follow_the_request_accounting() {
    let fx = common::fixture(16);
    let cfg = SimConfig {
        policy: Some(RequestPolicy::random(0.5, 4)),
        ..sim(&fx, InferenceArm::BothFusion)
    };
    let r = run_episode(&fx.cloud, &fx.device, &fx.splits, &fx.groups.test, &cfg).unwrap();
    let mut up = 0;
    for o in r.outcomes.iter().filter(|o| o.requested) {
        up += fx.splits.user(o.user).unwrap().realtime.len() as u64 * 4;
    }
    assert_eq!(r.bytes_up, up);
    assert_eq!(r.bytes_down, r.request_count as u64 * cfg.k as u64 * 8);
}

#[test]
fn ablation_csv_is_identical_across_runs_and_thread_counts() {
    let cfg = common::small_config();
    let arms = standard_arms(&cfg);
    let once = || reports_csv(&run_ablation(&cfg, &arms, &[1, 2], None).unwrap());
    let a = once();
    let b = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(once);
    let c = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(once);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert!(a.starts_with("arm,metric,K,value,request_rate,seed\n"));
}

#[test]
fn mismatched_lag_is_rejected() {
    let fx = common::fixture(17);
    let cfg = SimConfig { delta_t: 3, ..sim(&fx, InferenceArm::BothFusion) };
    let err = run_episode(&fx.cloud, &fx.device, &fx.splits, &fx.groups.test, &cfg).unwrap_err();
    assert!(matches!(err, Error::InvalidConfig(_)), "{err}");
    let err = run_episode(&fx.cloud, &fx.device, &fx.splits, &[], &sim(&fx, InferenceArm::BothFusion)).unwrap_err();
    assert!(matches!(err, Error::EmptyInput(_)));
}

use sncox::analytics::{
    evaluate_batch, joint_transform, joint_transform_detailed, mean_n, network_transform, network_transform_m1,
    write_batch_csv, QuadratureConfig, TransformQuery,
};
use sncox::coxarrivals::{sample_arrivals, ArrivalMethod};
use sncox::distributions::{ServiceLaw, ShotLaw, ShotLawVector};
use sncox::netsim::{replicate, Dependence, NetworkSpec, TandemSpec};
use sncox::rng::{seed_split, StreamRole};
use sncox::shotnoise::{simulate_path, ShotNoiseSpec};
use sncox::stats::mean_estimate;

fn spec() -> ShotNoiseSpec {
    ShotNoiseSpec::scalar(2.0, 1.0, ShotLaw::Exponential { mean: 1.0 })
}

#[test]
fn specs_round_trip_through_json() {
    let text = r#"{"nu": 1.5, "r": [1.0, 2.0],
        "shots": {"components": [{"kind": "gamma", "shape": 2.0, "scale": 0.5}, {"kind": "deterministic", "value": 1.0}],
                  "coupling": "comonotone"}}"#;
    let s: ShotNoiseSpec = serde_json::from_str(text).unwrap();
    assert_eq!(s.dim(), 2);
    let back: ShotNoiseSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
    assert_eq!(s, back);

    let net = NetworkSpec::parallel_tandems(&[TandemSpec::new(vec![ServiceLaw::Gamma { shape: 2.0, rate: 1.0 }], 0)], Dependence::Single);
    let back: NetworkSpec = serde_json::from_str(&serde_json::to_string(&net).unwrap()).unwrap();
    assert_eq!(net, back);
    assert!(serde_json::from_str::<ShotNoiseSpec>(r#"{"nu": 1, "r": 1, "shots": {"components": []}, "extra": 0}"#).is_err());
}

#[test]
fn simulated_arrivals_match_quadrature_mean() {
    let sp = spec();
    let service = ServiceLaw::Uniform { upper: 1.5 };
    let t = 3.0;
    let counts: Vec<f64> = (0..20_000u64)
        .map(|k| {
            let path = simulate_path(&sp, t, &mut seed_split(5, k, StreamRole::Shots)).unwrap();
            let arr = sample_arrivals(&path, 0, ArrivalMethod::Inversion, &mut seed_split(5, k, StreamRole::Arrivals)).unwrap();
            let mut svc = seed_split(5, k, StreamRole::Services);
            arr.epochs
                .iter()
                .filter(|&&e| e + sncox::distributions::Sample::sample(&service, &mut svc) > t)
                .count() as f64
        })
        .collect();
    assert!(mean_estimate(&counts, 5).within(mean_n(&sp, &service, t).unwrap(), 4.0));
}

#[test]
fn general_network_reduces_to_tandems() {
    // a source feeding node a, which splits evenly to b and c
    let text = r#"{
        "nodes": [{"id": "a", "service": {"kind": "exponential", "rate": 1.0}},
                  {"id": "b", "service": {"kind": "deterministic", "value": 0.7}},
                  {"id": "c", "service": {"kind": "exponential", "rate": 2.0}}],
        "edges": [{"from": "a", "to": "b", "probability": 0.5}, {"from": "a", "to": "c", "probability": 0.5}],
        "sources": [{"id": "s", "node": "a"}]
    }"#;
    let net: NetworkSpec = serde_json::from_str(text).unwrap();
    let q = TransformQuery::new(2.0, vec![0.7, 0.5, 0.9], vec![0.2]);
    let quad = QuadratureConfig::default();
    let v = network_transform(&net, &spec(), &q, &quad).unwrap().value;
    let reps = 100_000;
    let est = sncox::netsim::estimate_joint_pgf(&net, &spec(), &q, reps, 12).unwrap();
    assert!(est.within(v, 4.0), "{est:?} vs {v}");

    // with only node a observed the network is a single queue
    let qa = TransformQuery::new(2.0, vec![0.7, 1.0, 1.0], vec![0.2]);
    let single = joint_transform(&spec(), &ServiceLaw::Exponential { rate: 1.0 }, &TransformQuery::new(2.0, vec![0.7], vec![0.2]), &quad).unwrap();
    assert!((network_transform(&net, &spec(), &qa, &quad).unwrap().value - single).abs() < 1e-8);
}

#[test]
fn one_component_m1_is_the_single_queue() {
    let svc = ServiceLaw::Gamma { shape: 3.0, rate: 2.0 };
    let q = TransformQuery::new(2.5, vec![0.4], vec![0.6]);
    let quad = QuadratureConfig::default();
    let a = network_transform_m1(&spec(), &[TandemSpec::new(vec![svc], 0)], &q, &quad).unwrap();
    let b = joint_transform(&spec(), &svc, &q, &quad).unwrap();
    assert!((a - b).abs() < 1e-8);
}

#[test]
fn batch_csv_from_public_api() {
    let svc = ServiceLaw::Exponential { rate: 1.0 };
    let queries: Vec<TransformQuery> = serde_json::from_str(r#"[{"t": 1.0, "z": [0.5], "s": [0.0]}, {"t": 2.0, "z": [0.9], "s": [1.0]}]"#).unwrap();
    let rows = evaluate_batch(&queries, |q| joint_transform_detailed(&spec(), &svc, q, &QuadratureConfig::default())).unwrap();
    let mut buf = Vec::new();
    write_batch_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let last: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(last[..3], ["2", "0.9", "1"]);
}

#[test]
fn comonotone_pair_jumps_together() {
    let s = ShotNoiseSpec {
        nu: 3.0,
        r: vec![1.0, 0.5],
        shots: ShotLawVector::comonotone(vec![ShotLaw::Exponential { mean: 1.0 }, ShotLaw::Exponential { mean: 2.0 }]),
        lambda0: vec![],
    };
    let net = NetworkSpec::parallel_tandems(
        &[TandemSpec::new(vec![ServiceLaw::Exponential { rate: 1.0 }], 0), TandemSpec::new(vec![ServiceLaw::Exponential { rate: 1.0 }], 1)],
        Dependence::M1,
    );
    let ratios = replicate(&net, &s, 1.0, 3, 50, |rep| {
        (0..rep.path.shot_count()).all(|k| {
            let b = rep.path.shot_size(k);
            (b[1] - 2.0 * b[0]).abs() < 1e-9 * b[1].max(1.0)
        })
    })
    .unwrap();
    assert!(ratios.into_iter().all(|x| x));
}

use proptest::prelude::*;

use super::*;
use crate::codec::{BucketConfig, BucketingScheme};
use crate::data::Slot;
use crate::nn::{ParamStore, Tape, Tensor2};

fn slots() -> Vec<Slot> {
    vec![
        Slot {
            name: "a".into(),
            vocab: 3,
        },
        Slot {
            name: "b".into(),
            vocab: 5,
        },
    ]
}

fn scheme() -> BucketingScheme {
    let t0: Vec<f64> = (0..60)
        .map(|i| if i % 3 == 0 { 0.0 } else { f64::from(i) })
        .collect();
    let t1: Vec<f64> = t0
        .iter()
        .map(|v| v * 1.5 + if *v > 0.0 { 2.0 } else { 0.0 })
        .collect();
    let config = BucketConfig {
        buckets_per_range: vec![4],
        ..BucketConfig::default()
    };
    BucketingScheme::fit(&[t0, t1], &[config.clone(), config])
        .unwrap()
        .0
}

fn ids() -> Vec<Vec<usize>> {
    vec![vec![0, 1], vec![2, 4], vec![1, 0]]
}

fn build(components: Components) -> (ParamStore, OdmnNet) {
    let mut store = ParamStore::new();
    let net = OdmnNet::new(
        &mut store,
        &slots(),
        &scheme(),
        &ModelConfig::default(),
        components,
        7,
    )
    .unwrap();
    (store, net)
}

const FULL: Components = Components {
    mono: true,
    bias_tower: true,
};

#[test]
fn output_shapes_follow_scheme() {
    let (store, net) = build(FULL);
    let outs = net.outputs(&store, &ids()).unwrap();
    for (out, ts) in outs.iter().zip(&net.scheme.tasks) {
        assert_eq!(out.p_c.shape(), (3, ts.num_sub_dists()));
        assert_eq!(out.p_o.shape(), (3, ts.num_sub_dists()));
        assert_eq!(out.o.shape(), (3, ts.num_buckets()));
        for (s, sd) in ts.sub_dists.iter().enumerate() {
            assert_eq!(out.q_c[s].cols(), sd.num_buckets());
            assert_eq!(out.q_o[s].cols(), sd.num_buckets());
            match &out.q_b[s] {
                Some(q) => assert_eq!(q.cols(), sd.num_bias_slots()),
                None => assert_eq!(sd.num_bias_slots(), 0),
            }
        }
    }
}

#[test]
fn bucket_distribution_is_normalized_and_matches_free_function() {
    let (store, net) = build(FULL);
    let outs = net.outputs(&store, &ids()).unwrap();
    for out in &outs {
        for i in 0..3 {
            let q: Vec<&[f64]> = out.q_c.iter().map(|q| q.row(i)).collect();
            let expect = normalized_bucket_distribution(out.p_c.row(i), &q);
            assert_eq!(out.o.row(i), expect.as_slice());
            assert!((out.o.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn normalized_distribution_by_hand() {
    let o = normalized_bucket_distribution(&[0.25, 0.75], &[&[1.0], &[0.2, 0.8]]);
    assert_eq!(o, vec![0.25, 0.15000000000000002, 0.6000000000000001]);
}

#[test]
fn mono_units_exist_only_from_second_task() {
    let (store, net) = build(FULL);
    assert!(net.tasks[0].mono_units().next().is_none());
    let second: Vec<_> = net.tasks[1].mono_units().collect();
    assert_eq!(second.len(), 1 + net.scheme.tasks[1].num_sub_dists());
    let upstream = net.scheme.tasks[0].num_buckets();
    for m in second {
        assert_eq!(m.hidden.in_dim, upstream);
        assert_eq!(m.hidden.out_dim, upstream.max(4));
        for id in m.param_ids() {
            let p = store.get(id);
            if p.nonnegative {
                assert!(p.value.data().iter().all(|&w| w >= 0.0));
            }
        }
    }
}

#[test]
fn shared_parameters_do_not_depend_on_mono() {
    let (with, _) = build(FULL);
    let (without, _) = build(Components {
        mono: false,
        bias_tower: true,
    });
    assert!(without.len() < with.len());
    for (_, p) in without.iter() {
        let id = with.find(&p.name).expect("shared name");
        assert_eq!(with.value(id), &p.value, "{}", p.name);
    }
}

#[test]
fn mono_input_is_gradient_stopped() {
    // Gradient of a task-2 loss through the mono path must not reach task-1
    // towers; only the shared bottom couples them.
    let (store, net) = build(FULL);
    let mut tape = Tape::new();
    let fwd = net.forward(&mut tape, &store, &ids()).unwrap();
    let loss = tape.scaled_sum(fwd.tasks[1].o, 1.0);
    let grads = tape.backward(loss).unwrap();
    let t0_tower = store.find("task0.dct.out.w").unwrap();
    assert!(grads
        .get(t0_tower)
        .is_none_or(|g| g.data().iter().all(|&x| x == 0.0)));
}

#[test]
fn predictions_lie_in_label_range_and_are_deterministic() {
    let (store, net) = build(FULL);
    let a = net.predict(&store, &ids()).unwrap();
    let b = net.predict(&store, &ids()).unwrap();
    assert_eq!(a, b);
    for row in &a {
        for (t, &y) in row.iter().enumerate() {
            let ts = &net.scheme.tasks[t];
            let lo = ts.buckets().map(|b| b.min).fold(f64::INFINITY, f64::min);
            let hi = ts
                .buckets()
                .map(|b| b.max)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((lo..=hi).contains(&y));
        }
    }
}

#[test]
fn out_of_vocabulary_id_is_rejected() {
    let (store, net) = build(FULL);
    assert!(net.predict(&store, &[vec![3, 0]]).is_err());
    assert!(net.predict(&store, &[vec![0]]).is_err());
}

#[test]
fn baseline_has_one_head_per_task() {
    let mut store = ParamStore::new();
    let net = BaselineNet::new(&mut store, &slots(), 4, &ModelConfig::default(), 1).unwrap();
    let pred = net.predict(&store, &ids()).unwrap();
    assert_eq!(pred.len(), 3);
    assert!(pred.iter().all(|r| r.len() == 4));
}

proptest! {
    #[test]
    fn mono_unit_is_monotone(
        base in prop::collection::vec(0.0f64..1.0, 6),
        bump in prop::collection::vec(0.0f64..0.5, 6),
        seed in 0u64..50,
    ) {
        let mut store = ParamStore::new();
        let unit = MonoUnit::new(&mut store, "m", 6, 4, 3, seed).unwrap();
        let lifted: Vec<f64> = base.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let lo = unit.forward(&store, &Tensor2::row_vector(base)).unwrap();
        let hi = unit.forward(&store, &Tensor2::row_vector(lifted)).unwrap();
        for (a, b) in lo.data().iter().zip(hi.data()) {
            prop_assert!(b >= a);
        }
    }
}

#[test]
fn detached_forward_with_live_upstream_is_identical() {
    let (store, net) = build(FULL);
    let mut tape = Tape::new();
    let fwd = net.forward(&mut tape, &store, &ids()).unwrap();
    let upstream: Vec<Tensor2> = fwd.tasks.iter().map(|t| tape.value(t.o).clone()).collect();
    let mut again = Tape::new();
    let fixed = net
        .forward_detached(&mut again, &store, &ids(), Some(&upstream))
        .unwrap();
    for (a, b) in fwd.tasks.iter().zip(&fixed.tasks) {
        assert_eq!(tape.value(a.o), again.value(b.o));
        assert_eq!(tape.value(a.p_c), again.value(b.p_c));
    }
    let short = &upstream[..0];
    assert!(net
        .forward_detached(&mut Tape::new(), &store, &ids(), Some(short))
        .is_err());
}

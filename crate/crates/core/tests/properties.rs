use std::collections::HashSet;

use proptest::prelude::*;
use serde_json::json;

use seprank::audit::{config_from_value, diagnose, param_count};
use seprank::bounds::{asymptotic_logs, lower_bound, upper_bound, BoundInputs};
use seprank::model::{EmbeddingShape, NetworkShape, NetworkSpec, RawInput};
use seprank::numerics::{numerical_rank, Matrix, RankTolerance};
use seprank::septensor::{
    build_grid_tensor, matricize, matricize_index, GridOptions, Partition, TemplateSet,
};
use seprank::witness::phi_index;

fn net(depth: usize, heads: usize, width: usize, attn_dim: usize, n: usize, pos: usize, seed: u64) -> NetworkSpec<f64> {
    NetworkSpec::random(
        NetworkShape {
            depth,
            heads,
            width,
            attn_dim,
        },
        EmbeddingShape::Vocab {
            vocab_size: 5,
            rank: width.min(5),
            seq_len: n,
            positional_rank: pos,
        },
        seed,
    )
    .unwrap()
}

fn close(a: &Matrix<f64>, b: &Matrix<f64>, rel: f64) -> bool {
    let scale = a.max_abs().max(b.max_abs()).max(1e-300);
    a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| (x - y).abs() <= rel * scale)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forward_is_homogeneous(depth in 1usize..=2, seed in any::<u64>(), alpha in 0.3f64..2.0) {
        let net = net(depth, 2, 3, 2, 3, 0, seed);
        let ys = net.embedding().embed(&RawInput::Tokens(vec![0, 4, 2])).unwrap();
        let base = net.forward_embedded(ys.clone()).unwrap();
        let scaled = net.forward_embedded(ys.scale(alpha)).unwrap();
        let want = base.scale(alpha.powi(3i32.pow(depth as u32)));
        prop_assert!(close(&scaled, &want, 1e-9));
    }

    #[test]
    fn forward_is_permutation_equivariant(seed in any::<u64>(), perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
        let net = net(2, 1, 3, 2, 4, 0, seed);
        let tokens = vec![1usize, 4, 0, 3];
        let out = net.forward(&RawInput::Tokens(tokens.clone())).unwrap();
        let permuted: Vec<usize> = perm.iter().map(|&i| tokens[i]).collect();
        let pout = net.forward(&RawInput::Tokens(permuted)).unwrap();
        prop_assert!(close(&pout, &out.select_columns(&perm), 1e-10));
    }

    #[test]
    fn rank_invariances(rows in 1usize..6, cols in 1usize..6, k in 0usize..4, seed in any::<u64>(), c in 0.1f64..10.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let k = k.min(rows).min(cols);
        let u = Matrix::from_fn(rows, k, |_, _| rng.random_range(-1.0..1.0));
        let v = Matrix::from_fn(k, cols, |_, _| rng.random_range(-1.0..1.0));
        let m = if k == 0 { Matrix::zeros(rows, cols) } else { u.matmul(&v).unwrap() };
        let tol = RankTolerance::DEFAULT;
        let r = numerical_rank(&m, tol).unwrap();
        prop_assert_eq!(r, k);
        prop_assert_eq!(numerical_rank(&m.transpose(), tol).unwrap(), r);
        prop_assert_eq!(numerical_rank(&m.scale(c), tol).unwrap(), r);
        let rev_rows: Vec<usize> = (0..rows).rev().collect();
        prop_assert_eq!(numerical_rank(&m.select_rows(&rev_rows), tol).unwrap(), r);
    }

    #[test]
    fn upper_bound_monotone_and_clamped(depth in 1u32..6, width in 1u64..20, r in 1u64..25, h in 1u64..6) {
        let b = |r: u64, d: u32, h: u64| upper_bound(&BoundInputs::new(d, width, r, h)).unwrap();
        let here = b(r, depth, h);
        prop_assert!(here.ln <= b(r + 1, depth, h).ln + 1e-12);
        prop_assert!(here.ln <= b(r, depth + 1, h).ln + 1e-12);
        // only min(r, d_x) matters, and H never does
        prop_assert_eq!(&here, &b(r.min(width), depth, h));
        prop_assert_eq!(&here, &b(r, depth, h + 3));
    }

    #[test]
    fn lower_never_exceeds_upper(depth in 2u32..7, width in 1u64..30, r in 1u64..30, h in 1u64..6) {
        let inp = BoundInputs::new(depth, width, r, h);
        let lo = lower_bound(&inp).unwrap();
        let up = upper_bound(&inp).unwrap();
        prop_assert!(lo.value.ln <= up.ln);
        let s = asymptotic_logs(&inp);
        prop_assert!(s.lower <= s.upper);
        prop_assert_eq!(lo.flags.heads_ok, h < r.min(width));
    }

    #[test]
    fn matricization_is_bijective(half in 1usize..=3, z in 2usize..=3, mask in any::<u8>()) {
        let n = 2 * half;
        // choose P from the mask, topped up to half the positions
        let mut p: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).take(half).collect();
        for i in 0..n {
            if p.len() == half { break; }
            if !p.contains(&i) { p.push(i); }
        }
        let q: Vec<usize> = (0..n).filter(|i| !p.contains(i)).collect();
        let part = Partition::new(p, q, n).unwrap();
        let side = z.pow(half as u32);
        let mut seen = HashSet::new();
        for flat in 0..z.pow(n as u32) {
            let idx: Vec<usize> = (0..n).rev().map(|e| flat / z.pow(e as u32) % z).collect();
            let (row, col) = matricize_index(&idx, &part, z);
            prop_assert!(row < side && col < side);
            prop_assert!(seen.insert((row, col)));
        }
    }

    #[test]
    fn more_templates_never_lower_rank(seed in any::<u64>(), z in 2usize..4) {
        let net = net(1, 1, 3, 2, 2, 1, seed);
        let part = Partition::odd_even(2).unwrap();
        let rank = |z: usize| {
            let t = TemplateSet::first_tokens(z).unwrap();
            let g = build_grid_tensor(&net, &t, 2, 0, 0, GridOptions::default()).unwrap();
            numerical_rank(&matricize(&g, &part).unwrap(), RankTolerance::GRID).unwrap()
        };
        prop_assert!(rank(z) <= rank(z + 1));
    }

    #[test]
    fn phi_is_injective_off_ones_slots(d_a in 2usize..9, limit in 1usize..80) {
        let mut seen = HashSet::new();
        for j in (1..=limit).filter(|j| (j - 1) % d_a != d_a - 1) {
            prop_assert!(seen.insert(phi_index(j, d_a)));
        }
    }

    #[test]
    fn audit_flags_match_ratios(v in 1u64..5000, dx in 1u64..3000, l in 1u64..50, h in 1u64..64, da in 1u64..256, r in 1u64..5000) {
        let r = r.min(v.min(dx));
        let c = config_from_value(&json!({
            "name": "fuzz", "vocab_size": v, "width": dx, "depth": l, "heads": h,
            "attention_dim": da, "embedding_rank": r
        })).unwrap();
        let rep = diagnose(&c).unwrap();
        prop_assert_eq!(rep.vocab_bottleneck.flagged, r < dx);
        prop_assert_eq!(rep.vocab_bottleneck.flagged, rep.vocab_bottleneck.ratio < 1.0);
        prop_assert_eq!(rep.attention_overhang.flagged, h * da > dx);
        prop_assert_eq!(rep.attention_overhang.flagged, rep.attention_overhang.ratio > 1.0);
        let again = serde_json::to_string(&diagnose(&c).unwrap()).unwrap();
        prop_assert_eq!(serde_json::to_string(&rep).unwrap(), again);
    }

    #[test]
    fn factoring_saves_parameters_below_break_even(v in 2u64..500, dx in 2u64..500, r in 1u64..500) {
        prop_assume!(r < v.min(dx) && (r as u128) * ((v + dx) as u128) < (v as u128) * (dx as u128));
        let doc = |rank: Option<u64>| {
            let mut d = json!({"name": "p", "vocab_size": v, "width": dx, "depth": 2, "heads": 1});
            if let Some(r) = rank { d["embedding_rank"] = r.into(); }
            config_from_value(&d).unwrap()
        };
        let full = param_count(&doc(None), false).unwrap();
        let fact = param_count(&doc(Some(r)), false).unwrap();
        prop_assert!(full.total >= fact.total);
        prop_assert_eq!(fact.embedding, v * r + r * dx);
    }

    #[test]
    fn pixel_vocabulary_is_a_bottleneck(dx in 257u64..4096) {
        let c = config_from_value(&json!({"name": "st", "vocab_size": 256, "width": dx, "depth": 128, "heads": 8})).unwrap();
        prop_assert!(diagnose(&c).unwrap().vocab_bottleneck.flagged);
    }
}

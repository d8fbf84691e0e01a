//! Each fast implementation against a direct, loop-by-loop reference on
//! random small instances.

use proptest::prelude::*;
use spotgcn::evalkit::{greedy_match, optimal_match_count};
use spotgcn::expr::ExprType;
use spotgcn::graph::flgp_pool;
use spotgcn::losses::{classification_loss, supcon_loss, Boundary, FrameLabels, FrameType, Reduction};
use spotgcn::model::{stgcn_layer, tcn_layer, HEAD_DIM};
use spotgcn::spotting::{nms, ExpressionProposal};

mod reference;

use reference::*;

const CASES: u32 = 128;
const LOSS_TOL: f64 = 1e-9;
const LAYER_TOL: f64 = 1e-6;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn unit_rows(raw: &[f64], d: usize) -> Vec<Vec<f64>> {
    raw.chunks(d)
        .map(|r| {
            let n = r.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
            r.iter().map(|x| x / n).collect()
        })
        .collect()
}

fn supcon_case() -> impl Strategy<Value = (usize, Vec<f64>, Vec<u8>, f64)> {
    (2usize..9, 1usize..6).prop_flat_map(|(n, d)| {
        (
            Just(d),
            prop::collection::vec(-1.0f64..1.0, n * d),
            prop::collection::vec(0u8..3, n),
            0.1f64..1.0,
        )
    })
}

fn frame_labels() -> impl Strategy<Value = FrameLabels> {
    (0u8..3, 0u8..4).prop_map(|(kind, b)| {
        let mut l = FrameLabels::default();
        let t = match kind {
            0 => return l,
            1 => ExprType::Micro,
            _ => ExprType::Macro,
        };
        l.frame_type = if t == ExprType::Micro {
            FrameType::Micro
        } else {
            FrameType::Macro
        };
        l.types[t.index()].exp = true;
        l.types[t.index()].boundary = [
            None,
            Some(Boundary::Onset),
            Some(Boundary::Apex),
            Some(Boundary::Offset),
        ][b as usize];
        l
    })
}

fn layer_case() -> impl Strategy<Value = (usize, usize, usize, usize, usize)> {
    // (nodes, frames, kernel, c_in, c_out)
    (1usize..6, 1usize..5, 1usize..5, 1usize..4)
        .prop_flat_map(|(s, k, cin, cout)| (Just(s), k..k + 6, Just(k), Just(cin), Just(cout)))
}

fn interval() -> impl Strategy<Value = (usize, usize)> {
    (0usize..40, 0usize..12).prop_map(|(a, len)| (a, a + len))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn supcon_matches_reference((d, raw, labels, tau) in supcon_case()) {
        let z = unit_rows(&raw, d);
        let flat: Vec<f64> = z.concat();
        for (red, mean) in [(Reduction::Sum, false), (Reduction::MeanOverAnchors, true)] {
            let got = supcon_loss(&flat, d, &labels, tau, red).unwrap();
            let want = supcon_reference(&z, &labels, tau, mean);
            prop_assert!(close(got.value, want, LOSS_TOL), "{} vs {}", got.value, want);
            // gradient against central differences of the reference
            let h = 1e-6;
            for k in 0..flat.len() {
                let mut zp = flat.clone();
                zp[k] += h;
                let mut zm = flat.clone();
                zm[k] -= h;
                let fd = (supcon_reference(&unit_free(&zp, d), &labels, tau, mean)
                    - supcon_reference(&unit_free(&zm, d), &labels, tau, mean)) / (2.0 * h);
                prop_assert!((got.grad[k] - fd).abs() <= 1e-5 * (1.0 + fd.abs()), "grad {k}: {} vs {fd}", got.grad[k]);
            }
        }
    }

    #[test]
    fn classification_matches_reference(
        labels in prop::collection::vec(frame_labels(), 1..6),
        seed in prop::collection::vec(-4.0f64..4.0, 60),
        alpha in 0.1f64..1.0,
        gamma in 0.0f64..3.0,
    ) {
        let logits: Vec<f64> = seed.iter().cycle().take(labels.len() * HEAD_DIM).copied().collect();
        let got = classification_loss(&logits, &labels, alpha, gamma).unwrap();
        let want = classification_reference(&logits, &labels, alpha, gamma);
        prop_assert!(close(got.value, want, LOSS_TOL), "{} vs {}", got.value, want);
        let h = 1e-6;
        for k in 0..logits.len() {
            let mut lp = logits.clone();
            lp[k] += h;
            let mut lm = logits.clone();
            lm[k] -= h;
            let fd = (classification_reference(&lp, &labels, alpha, gamma)
                - classification_reference(&lm, &labels, alpha, gamma)) / (2.0 * h);
            prop_assert!((got.grad[k] - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "grad {k}: {} vs {fd}", got.grad[k]);
        }
    }

    #[test]
    fn stgcn_matches_reference(
        (s, t, k, cin, cout) in layer_case(),
        data in prop::collection::vec(-1.0f64..1.0, 400),
        adj_raw in prop::collection::vec(0.0f64..1.0, 25),
    ) {
        let x: Vec<f64> = data.iter().cycle().take(s * t * cin).copied().collect();
        let w: Vec<f64> = data.iter().rev().cycle().take(k * cin * cout).copied().collect();
        let b: Vec<f64> = data[..cout].to_vec();
        let adj: Vec<f64> = adj_raw[..s * s].to_vec();
        let got = stgcn_layer(&x, (s, t, cin), &adj, &w, &b, k).unwrap();
        let want = stgcn_reference(&x, s, t, cin, &adj, &w, &b, k);
        prop_assert_eq!(got.len(), want.len());
        for (g, r) in got.iter().zip(&want) {
            prop_assert!((g - r).abs() <= LAYER_TOL, "{g} vs {r}");
        }
    }

    #[test]
    fn tcn_matches_reference(
        (_, t, k, cin, cout) in layer_case(),
        data in prop::collection::vec(-1.0f64..1.0, 200),
    ) {
        let x: Vec<f64> = data.iter().cycle().take(t * cin).copied().collect();
        let w: Vec<f64> = data.iter().rev().cycle().take(k * cin * cout).copied().collect();
        let b: Vec<f64> = data[..cout].to_vec();
        let got = tcn_layer(&x, (t, cin), &w, &b, k).unwrap();
        let want = stgcn_reference(&x, 1, t, cin, &[1.0], &w, &b, k);
        for (g, r) in got.iter().zip(&want) {
            prop_assert!((g - r).abs() <= LAYER_TOL, "{g} vs {r}");
        }
    }

    #[test]
    fn flgp_matches_reference(
        t in 1usize..5,
        c in 1usize..4,
        data in prop::collection::vec(-5.0f64..5.0, 10 * 4 * 3),
        assign in prop::collection::vec(0usize..5, 10),
    ) {
        let s = 10;
        let x: Vec<f64> = data[..s * t * c].to_vec();
        // random partition of the ten nodes into at most five nonempty groups
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); 5];
        for (node, &g) in assign.iter().enumerate() {
            groups[g].push(node);
        }
        groups.retain(|g| !g.is_empty());
        let got = flgp_pool(&x, (s, t, c), s, &groups).unwrap();
        let want = flgp_reference(&x, t, c, &groups);
        prop_assert_eq!(got.len(), want.len());
        for (g, r) in got.iter().zip(&want) {
            prop_assert!((g - r).abs() <= LAYER_TOL);
        }
    }

    #[test]
    fn nms_matches_reference(
        raw in prop::collection::vec((interval(), 0u8..6), 0..12),
        theta in prop::sample::select(vec![0.1, 0.3, 0.5, 0.7]),
    ) {
        let props: Vec<ExpressionProposal> = raw
            .into_iter()
            .map(|((on, off), s)| ExpressionProposal {
                video: "v".into(),
                expr: ExprType::Micro,
                onset: on,
                offset: off,
                // coarse scores so ties occur
                score: s as f64 / 5.0,
            })
            .collect();
        let got = nms(props.clone(), theta);
        let want = nms_reference(props, theta);
        prop_assert_eq!(got, want);
    }

    #[test]
    fn matching_matches_reference(
        gts in prop::collection::vec(interval(), 0..10),
        props in prop::collection::vec(interval(), 0..10),
        theta in prop::sample::select(vec![0.3, 0.5, 0.7]),
    ) {
        let best = max_matching_reference(&gts, &props, theta);
        prop_assert_eq!(optimal_match_count(&gts, &props, theta), best);
        let greedy = greedy_match(&gts, &props, theta);
        prop_assert!(greedy.len() <= best);
        let mut g_seen = std::collections::HashSet::new();
        let mut p_seen = std::collections::HashSet::new();
        for m in &greedy {
            prop_assert!(g_seen.insert(m.gt) && p_seen.insert(m.proposal));
            let iou = inclusive_iou(gts[m.gt], props[m.proposal]);
            prop_assert!(iou >= theta);
            prop_assert!((iou - m.iou).abs() <= 1e-12);
        }
    }
}

/// Rows as given, no renormalization (the reference takes raw embeddings).
fn unit_free(flat: &[f64], d: usize) -> Vec<Vec<f64>> {
    flat.chunks(d).map(|r| r.to_vec()).collect()
}

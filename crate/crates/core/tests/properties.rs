use proptest::prelude::*;

use mapshare_core::codec::{bit_cost, compress, instantiate, Codebook, CommModel};
use mapshare_core::encoder::{select_abstraction, EncoderParams, SensorBelief};
use mapshare_core::estimation::{decode, ConstraintStore, DecodeParams};
use mapshare_core::grid::{footprint, CellIndex, GridMap};
use mapshare_core::planner::{path_cost, path_weights, shortest_path, PlannerParams};

fn grid(h: usize, w: usize) -> impl Strategy<Value = GridMap> {
    prop_oneof![
        prop::collection::vec(prop::bool::weighted(0.3).prop_map(|b| if b { 1.0 } else { 0.0 }), h * w),
        prop::collection::vec(0.0..=1.0f64, h * w),
    ]
    .prop_map(move |v| GridMap::new(h, w, v).unwrap())
}

fn cell(h: usize, w: usize) -> impl Strategy<Value = CellIndex> {
    (0..h, 0..w).prop_map(|(r, c)| CellIndex::new(r, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn planned_paths_are_connected_and_priced(m in grid(6, 6), s in cell(6, 6), g in cell(6, 6)) {
        let p = PlannerParams::default();
        let path = shortest_path(&m, s, g, &p);
        prop_assert_eq!(path.start(), s);
        prop_assert_eq!(path.goal(), g);
        for w in path.nodes.windows(2) {
            let d = w[0].row.abs_diff(w[1].row) + w[0].col.abs_diff(w[1].col);
            prop_assert_eq!(d, 1);
        }
        prop_assert!((path.cost - path_cost(&m, &path.nodes, &p)).abs() < 1e-9);

        // an L-shaped route is always available, so the optimum is no worse
        let mut l = vec![s];
        let mut c = s;
        while c.row != g.row {
            c = CellIndex::new(if g.row > c.row { c.row + 1 } else { c.row - 1 }, c.col);
            l.push(c);
        }
        while c.col != g.col {
            c = CellIndex::new(c.row, if g.col > c.col { c.col + 1 } else { c.col - 1 });
            l.push(c);
        }
        prop_assert!(path.cost <= path_cost(&m, &l, &p) + 1e-12);
    }

    #[test]
    fn path_weights_peak_at_goal(m in grid(7, 5), s in cell(7, 5), g in cell(7, 5)) {
        let path = shortest_path(&m, s, g, &PlannerParams::default());
        let w = path_weights(&path, &m, 3.33);
        prop_assert!(w.values.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(w.values[m.flat(g)], 1.0);
    }

    #[test]
    fn group_summaries_match_direct_statistics(m in grid(9, 9), c in cell(9, 9), theta in 0usize..8) {
        let book = Codebook::default_7x7();
        let template = &book.templates()[theta % book.len()];
        let abs = instantiate(template, &m, c);
        let msg = compress(|j| Some(m.values()[j]), &abs, m.width()).unwrap();
        prop_assert!(msg.is_valid());
        prop_assert_eq!(bit_cost(&msg, &CommModel::default()), 24 * abs.k() as u64 + 4);
        for (g, summary) in abs.groups.iter().zip(&msg.groups) {
            let vals: Vec<f64> = g.cells.iter().map(|&j| m.values()[j]).collect();
            let o = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - o) * (v - o)).sum::<f64>() / vals.len() as f64;
            prop_assert!((summary.mean - o).abs() < 1e-12);
            prop_assert!((summary.variance - var).abs() < 1e-12);
        }
    }

    #[test]
    fn uncertainty_only_shrinks(
        m in grid(8, 8),
        steps in prop::collection::vec((cell(8, 8), 0usize..8, any::<bool>()), 1..5),
    ) {
        let book = Codebook::default_7x7();
        let mut store = ConstraintStore::new(m.len());
        let mut h = store.uncertainty().values;
        for (c, theta, with_var) in steps {
            let abs = instantiate(&book.templates()[theta % book.len()], &m, c);
            let mut msg = compress(|j| Some(m.values()[j]), &abs, m.width()).unwrap();
            if !with_var {
                msg = msg.without_variance();
            }
            store.add_message(&abs, &msg).unwrap();
            let next = store.uncertainty().values;
            prop_assert!(next.iter().zip(&h).all(|(a, b)| a <= b));
            h = next;
        }
    }

    #[test]
    fn decoded_estimate_is_feasible_and_within_bound(
        m in grid(8, 8),
        steps in prop::collection::vec((cell(8, 8), 0usize..8), 1..3),
    ) {
        let book = Codebook::default_7x7();
        let mut store = ConstraintStore::new(m.len());
        for (c, theta) in steps {
            let abs = instantiate(&book.templates()[theta % book.len()], &m, c);
            store.add_message(&abs, &compress(|j| Some(m.values()[j]), &abs, m.width()).unwrap()).unwrap();
        }
        let est = decode(&store, &DecodeParams::default()).unwrap();
        let x = &est.values;
        prop_assert!(x.iter().all(|v| (-1e-9..=1.0 + 1e-9).contains(v)));
        for (cells, mean) in store.equalities() {
            let got = cells.iter().map(|&j| x[j]).sum::<f64>() / cells.len() as f64;
            prop_assert!((got - mean).abs() < 1e-7, "equality off by {}", got - mean);
        }
        for (cells, bound) in store.balls() {
            prop_assert!(cells.iter().map(|&j| x[j] * x[j]).sum::<f64>() <= bound + 1e-7);
        }
        let h = store.uncertainty();
        for ((truth, est), bound) in m.values().iter().zip(x).zip(&h.values) {
            prop_assert!((truth - est).abs() <= bound + 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn encoder_picks_the_cheapest_candidate(
        m in grid(10, 10),
        c in cell(10, 10),
        goal in cell(10, 10),
        with_var in any::<bool>(),
    ) {
        let book = Codebook::default_7x7();
        let params = EncoderParams::default();
        let mut belief = SensorBelief::new(m.len(), 0.5, with_var);
        belief.sense(&m, &footprint(&m, c, 7, 7).unwrap());
        let path = shortest_path(&m, CellIndex::new(0, 0), goal, &PlannerParams::default());
        let weights = path_weights(&path, &m, 3.33);
        let sel = select_abstraction(&belief, &book, &m, c, &weights, &params, &DecodeParams::default()).unwrap();

        prop_assert_eq!(sel.evaluations.len(), book.len());
        for e in &sel.evaluations {
            let j = params.beta * e.distortion + (1.0 - params.beta) * e.uncertainty + 0.05 * e.k as f64;
            prop_assert!((e.cost - j).abs() < 1e-12);
        }
        let best = sel.evaluations.iter().map(|e| e.cost).fold(f64::INFINITY, f64::min);
        let first = sel.evaluations.iter().find(|e| e.cost == best).unwrap();
        prop_assert_eq!(sel.theta, first.theta);
        prop_assert_eq!(sel.message.variance_included, with_var);

        let before = belief.store.uncertainty().values;
        belief.commit_selection(&sel).unwrap();
        let after = belief.store.uncertainty().values;
        prop_assert!(after.iter().zip(&before).all(|(a, b)| a <= b));
        prop_assert_eq!(after, first.h.clone());
    }
}

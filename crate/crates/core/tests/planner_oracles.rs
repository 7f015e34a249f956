mod common;

use std::collections::HashSet;
use std::io::BufReader;
use std::sync::Arc;

use guide_core::diffusion::{DiffusionPolicy, PolicyConfig};
use guide_core::nodegraph::{assemble_graph, sample_free_nodes, GlobalGraph, GraphInputs};
use guide_core::planner::*;
use guide_core::predictor::{HeuristicParams, PredictorModel};
use guide_core::world::{Lattice, LatticePos, OccupancyMap, Pose};
use proptest::prelude::*;

fn small_maze(seed: u64, policy: PolicyKind) -> EpisodeConfig {
    EpisodeConfig {
        world_seed: seed,
        width_m: 30.0,
        height_m: 30.0,
        policy,
        ..EpisodeConfig::default()
    }
}

fn heuristic_models() -> Models {
    Models {
        predictor: Some(Arc::new(PredictorModel::Heuristic(HeuristicParams::default()))),
        policy: None,
    }
}

fn random_policy_models() -> Models {
    let cfg = PolicyConfig {
        d_model: 8,
        ffn: 16,
        blocks: 1,
        obs_dim: 4,
        crop_px: 9,
        eps_width: 32,
        eps_blocks: 1,
        ..PolicyConfig::default()
    };
    Models {
        policy: Some(Arc::new(DiffusionPolicy::new(cfg, 5))),
        ..heuristic_models()
    }
}

#[test]
fn trace_distance_is_recovered_by_replay() {
    for seed in 1..=3 {
        let tr = run_episode(&small_maze(seed, PolicyKind::NearestFrontier), &Models::default()).unwrap();
        assert!(tr.complete, "seed {seed}");
        let mut buf = Vec::new();
        write_trace(&mut buf, &tr).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next(), Some("step,x,y,unknown_count,cum_distance"));
        assert_eq!(text.lines().count(), tr.steps.len() + 2);

        let lattice = Lattice::new(
            &small_maze(seed, PolicyKind::NearestFrontier).world().unwrap().grid,
            2.0,
        )
        .unwrap();
        let (mut px, mut py) = lattice.pos_m(tr.start);
        let mut independent = 0.0;
        for s in &tr.steps {
            for p in &s.executed {
                let (x, y) = lattice.pos_m(*p);
                independent += ((x - px).powi(2) + (y - py).powi(2)).sqrt();
                (px, py) = (x, y);
            }
        }
        assert!((independent - tr.distance).abs() < 1e-9);

        let (pts, total) = read_trace_moves(BufReader::new(&buf[..])).unwrap();
        assert!((total - tr.distance).abs() < 1e-5);
        let moves: Vec<LatticePos> = pts.iter().map(|&(x, y)| lattice.nearest(x, y)).collect();
        let replay = replay_distance(tr.start, &moves, &lattice);
        // Trace lines record one pose per planning step, so the replay
        // straight-lines each pair of executed moves; it can only shorten.
        assert!(replay <= tr.distance + 1e-9);
        let executed: Vec<LatticePos> = tr.steps.iter().flat_map(|s| s.executed.clone()).collect();
        assert!((replay_distance(tr.start, &executed, &lattice) - tr.distance).abs() < 1e-9);
    }
}

#[test]
fn episodes_are_deterministic() {
    for policy in [PolicyKind::NearestFrontier, PolicyKind::GraphTsp, PolicyKind::Guide] {
        let cfg = EpisodeConfig {
            max_moves: Some(60),
            ..small_maze(4, policy)
        };
        let models = random_policy_models();
        let a = run_episode(&cfg, &models).unwrap();
        let b = run_episode(&cfg, &models).unwrap();
        assert_eq!(a.positions(), b.positions(), "{policy}");
        assert_eq!(a.distance, b.distance);
        assert_eq!(a.coverage, b.coverage);
    }
}

#[test]
fn small_room_finishes_after_the_first_scan() {
    let gt = common::room_world(10);
    for policy in [
        PolicyKind::NearestFrontier,
        PolicyKind::GraphTsp,
        PolicyKind::ExpertOracle,
    ] {
        let mut ex = Explorer::with_world(
            EpisodeConfig {
                policy,
                ..EpisodeConfig::default()
            },
            gt.clone(),
            heuristic_models(),
        )
        .unwrap();
        while ex.step().unwrap() {}
        assert!(ex.trace.complete);
        assert_eq!(ex.trace.distance, 0.0);
        assert!(ex.trace.steps.is_empty());
        assert_eq!(ex.trace.coverage, 1.0);
    }
    let plan = expert_trajectory(&gt, LatticePos::new(2, 2), 2.0, 10.0).unwrap();
    assert_eq!(plan.moves(), 0);
}

#[test]
fn expert_beats_nearest_frontier_on_most_mazes() {
    let mut wins = 0;
    let seeds = 1..=20u64;
    let n = seeds.clone().count();
    for seed in seeds {
        let nf = run_episode(&small_maze(seed, PolicyKind::NearestFrontier), &Models::default()).unwrap();
        let ex = run_episode(&small_maze(seed, PolicyKind::ExpertOracle), &Models::default()).unwrap();
        assert!(ex.complete && nf.complete, "seed {seed}");
        assert!(ex.coverage >= 0.99);
        if ex.distance <= nf.distance {
            wins += 1;
        }
    }
    assert!(wins * 10 >= n * 9, "expert shorter on {wins}/{n}");
}

#[test]
fn policies_stay_on_free_cells_and_traces_are_monotone() {
    let models = random_policy_models();
    for seed in 5..=7 {
        for policy in PolicyKind::ALL {
            let cfg = EpisodeConfig {
                max_moves: (policy != PolicyKind::ExpertOracle).then_some(150),
                ..small_maze(seed, policy)
            };
            let mut ex = Explorer::new(cfg, models.clone()).unwrap();
            while ex.step().unwrap() {
                assert!(ex.gt.is_free(ex.lattice.cell(ex.robot)), "{policy} seed {seed}");
            }
            let steps = &ex.trace.steps;
            assert!(steps.windows(2).all(|w| w[1].cum_distance >= w[0].cum_distance));
            assert!(steps.windows(2).all(|w| w[1].coverage >= w[0].coverage - 1e-12));
            assert!(steps.iter().all(|s| s.executed.len() <= 2));
        }
    }
}

#[test]
fn graph_policies_terminate_on_generated_mazes() {
    for seed in 10..20 {
        for policy in [PolicyKind::NearestFrontier, PolicyKind::GraphTsp] {
            let cfg = small_maze(seed, policy);
            let models = heuristic_models();
            let tr = run_episode(&cfg, &models).unwrap();
            assert!(tr.complete, "{policy} seed {seed}");
            assert!((tr.time_s - tr.distance / cfg.v_max).abs() < 1e-9);
        }
    }
}

#[test]
fn receding_horizon_executes_two_moves_and_aborts_on_walls() {
    let cfg = EpisodeConfig {
        max_moves: Some(100),
        ..EpisodeConfig::default()
    };
    let mut ex = Explorer::with_world(cfg.clone(), common::corridor_world(5, false), Models::default()).unwrap();
    assert_eq!(ex.robot, LatticePos::new(1, 2));
    let path: Vec<LatticePos> = (2..10).map(|i| LatticePos::new(i, 2)).collect();
    let (done, aborted) = ex.execute(&path).unwrap();
    assert_eq!(done, vec![LatticePos::new(2, 2), LatticePos::new(3, 2)]);
    assert!(!aborted);
    assert_eq!(ex.robot, LatticePos::new(3, 2));
    assert!((ex.trace.distance - 4.0).abs() < 1e-12);

    let (done, aborted) = ex.execute(&[LatticePos::new(4, 2), LatticePos::new(4, 3)]).unwrap();
    assert_eq!(done, vec![LatticePos::new(4, 2)]);
    assert!(aborted);
    assert!(ex.gt.is_free(ex.lattice.cell(ex.robot)));
    let (done, aborted) = ex.execute(&[LatticePos::new(7, 2)]).unwrap();
    assert!(done.is_empty() && aborted);
    assert!(ex.step().unwrap());
    assert!(ex.gt.is_free(ex.lattice.cell(ex.robot)));

    let mut whole = Explorer::with_world(
        EpisodeConfig { t_a: 8, ..cfg },
        common::corridor_world(5, false),
        Models::default(),
    )
    .unwrap();
    let near: Vec<LatticePos> = (2..6).map(|i| LatticePos::new(i, 2)).collect();
    assert_eq!(whole.execute(&near).unwrap(), (near.clone(), false));
}

/// Fully known open room; every node starts with zero utility.
fn known_room() -> GlobalGraph<f64> {
    let gt = common::room_world(60);
    let o = OccupancyMap::from_grid(gt.grid.clone());
    let lattice = Lattice::new(o.grid(), 2.0).unwrap();
    let vf = sample_free_nodes(&o, &lattice);
    let robot = lattice.pos_m(LatticePos::new(5, 5));
    let mut g: GlobalGraph<f64> = assemble_graph(&GraphInputs {
        o: &o,
        lattice,
        vf: &vf,
        vu: &[],
        r_m: 5.0,
        robot: Pose::new(robot.0, robot.1),
        visited: &HashSet::new(),
    })
    .unwrap();
    for n in &mut g.nodes {
        n.utility = 0.0;
        n.centroid = false;
    }
    g
}

#[test]
fn graph_tsp_small_cases() {
    let mut g = known_room();
    assert_eq!(plan_graph_tsp(&g), None);
    let target = g.node_at(LatticePos::new(8, 7)).unwrap();
    g.nodes[target].utility = 3.0;
    let path = plan_graph_tsp(&g).unwrap();
    let sp = g.dijkstra(g.robot);
    assert_eq!(*path.last().unwrap(), target);
    assert_eq!(path.len(), 3);
    let len: f64 = std::iter::once(g.robot)
        .chain(path.iter().copied())
        .collect::<Vec<_>>()
        .windows(2)
        .map(|w| g.edge_length(w[0], w[1]))
        .sum();
    assert!((len - sp.dist[target]).abs() < 1e-9);

    let mut g = known_room();
    let near = g.node_at(LatticePos::new(3, 5)).unwrap();
    let far = g.node_at(LatticePos::new(11, 5)).unwrap();
    g.nodes[near].utility = 1.0;
    g.nodes[far].centroid = true;
    assert_eq!(*plan_graph_tsp(&g).unwrap().last().unwrap(), near);
    g.nodes[near].visited = true;
    assert_eq!(*plan_graph_tsp(&g).unwrap().last().unwrap(), far);
}

#[test]
fn nearest_frontier_and_fallbacks_pick_the_expected_node() {
    let mut g = known_room();
    let a = g.node_at(LatticePos::new(7, 5)).unwrap();
    let b = g.node_at(LatticePos::new(5, 9)).unwrap();
    g.nodes[a].utility = 1.0;
    g.nodes[b].utility = 10.0;
    assert_eq!(*plan_nearest_frontier(&g).unwrap().last().unwrap(), a);
    // 10 / 8 m beats 1 / 4 m.
    assert_eq!(*utility_fallback(&g).unwrap().last().unwrap(), b);
    assert_eq!(frontier_fallback(&g, &[]), None);
}

proptest! {
    #[test]
    fn two_opt_never_lengthens_a_tour(pts in prop::collection::vec((0.0f64..50.0, 0.0f64..50.0), 2..25)) {
        let m: Vec<Vec<f64>> = pts
            .iter()
            .map(|a| pts.iter().map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).collect())
            .collect();
        let nn = nearest_neighbor_order(&m);
        let mut improved = nn.clone();
        two_opt(&mut improved, &m, TWO_OPT_PASSES);
        prop_assert!(path_length(&improved, &m) <= path_length(&nn, &m) + 1e-9);
        prop_assert_eq!(improved[0], 0);
        let mut sorted = improved.clone();
        sorted.sort();
        prop_assert_eq!(sorted, (0..pts.len()).collect::<Vec<_>>());
    }
}

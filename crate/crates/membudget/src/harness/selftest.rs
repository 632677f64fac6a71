//! Quick built-in invariant suite behind `membudget selftest`.
//!
//! These are smoke-level re-checks of the core contracts, meant to verify an
//! installed binary in seconds; the full test suite lives in `cargo test`.

use crate::budget::{allocate_pt_layers, MemoryBudget, PtSplit};
use crate::core::{run_episode, ScriptedPolicy};
use crate::corridor::{CorridorEnv, CorridorLayout};
use crate::datasets::{generate, reservoir_select, DatasetKind};
use crate::jellybean::phase;
use crate::mcts::{build_tree, extract_plan, MctsParams};
use crate::ptdqn::QPair;
use crate::rng::SeededRng;
use crate::world_model::TabularModel;

type Check = fn() -> Result<(), String>;

pub fn run() -> Result<(), String> {
    let checks: &[(&str, Check)] = &[
        ("budget split conservation", budget_split),
        ("pt layer allocation", pt_layers),
        ("corridor oracle returns", oracle_returns),
        ("reservoir selection size", reservoir_sizes),
        ("mle counts", mle_counts),
        ("tree node budget", tree_budget),
        ("reward phase schedule", phase_schedule),
        ("combined q additivity", q_additivity),
    ];
    for (name, check) in checks {
        check().map_err(|e| format!("selftest '{name}' failed: {e}"))?;
        println!("ok - {name}");
    }
    println!("selftest passed ({} checks)", checks.len());
    Ok(())
}

fn expect(condition: bool, message: &str) -> Result<(), String> {
    if condition {
        Ok(())
    } else {
        Err(message.to_string())
    }
}

fn budget_split() -> Result<(), String> {
    for plan in 0..=500 {
        let b = MemoryBudget::split(500, plan).map_err(|e| e.to_string())?;
        expect(
            b.model_units() + b.plan_units() == 500,
            "units must sum to N",
        )?;
    }
    expect(MemoryBudget::split(500, 501).is_err(), "overflow must fail")
}

fn pt_layers() -> Result<(), String> {
    let (p, t) = allocate_pt_layers(&[128, 256, 64], 0.1);
    expect(p == vec![13, 26, 6], "permanent widths at 10%")?;
    expect(t == vec![115, 230, 58], "transient widths at 10%")?;
    let split = PtSplit::new(vec![128, 256, 64], 52, 0.5);
    expect(split.units() == 500, "reference network uses 500 units")
}

fn oracle_returns() -> Result<(), String> {
    let layout = CorridorLayout::default();
    for (goal, expected) in [
        ("orange", 0.17),
        ("green", 0.33),
        ("blue", 0.49),
        ("pink", 0.65),
    ] {
        let path = layout
            .shortest_path((0, 0), goal)
            .map_err(|e| e.to_string())?;
        let mut env = CorridorEnv::new(layout.clone());
        let mut policy = ScriptedPolicy::new(path);
        let mut rng = SeededRng::new(0);
        let result =
            run_episode(&mut env, &mut policy, 100, &mut rng).map_err(|e| e.to_string())?;
        expect(
            result.undiscounted_return == expected,
            &format!("{goal}: got {}", result.undiscounted_return),
        )?;
    }
    Ok(())
}

fn reservoir_sizes() -> Result<(), String> {
    let layout = CorridorLayout::default();
    let mut rng = SeededRng::new(1);
    let stream =
        generate(DatasetKind::RandomOnly(100), &layout, &mut rng).map_err(|e| e.to_string())?;
    for capacity in [0usize, 10, 100, 200] {
        let kept = reservoir_select(stream.clone(), capacity, &mut rng);
        expect(kept.len() == capacity.min(100), "kept = min(n, capacity)")?;
    }
    Ok(())
}

fn mle_counts() -> Result<(), String> {
    let layout = CorridorLayout::default();
    let mut rng = SeededRng::new(2);
    let stream = generate(DatasetKind::AllOptimal, &layout, &mut rng).map_err(|e| e.to_string())?;
    let budget = MemoryBudget::split(500, 0).map_err(|e| e.to_string())?;
    let model = TabularModel::fit(&stream, &budget).map_err(|e| e.to_string())?;
    for t in &stream {
        expect(
            model.probability(t.state, t.action, t.next_state) > 0.0,
            "every stored transition must be known",
        )?;
    }
    expect(model.stored_transitions() == 36, "all of oa fits")
}

fn tree_budget() -> Result<(), String> {
    let layout = CorridorLayout::default();
    let mut rng = SeededRng::new(3);
    let stream = generate(DatasetKind::AllOptimal, &layout, &mut rng).map_err(|e| e.to_string())?;
    for n_pi in [0u32, 5, 50] {
        let budget = MemoryBudget::split(500, n_pi).map_err(|e| e.to_string())?;
        let model = TabularModel::fit(&stream, &budget).map_err(|e| e.to_string())?;
        let tree = build_tree(
            &model,
            layout.state_id(0, 0),
            &budget,
            &MctsParams::default(),
            &mut rng,
        );
        expect(tree.nodes_used() <= n_pi as usize, "node budget respected")?;
        let plan = extract_plan(&tree, 100);
        expect(plan.len() <= 100, "plan fits horizon")?;
    }
    Ok(())
}

fn phase_schedule() -> Result<(), String> {
    expect(phase(0, 150_000, -1.0, 2.0) == (-1.0, 2.0), "t=0")?;
    expect(
        phase(149_999, 150_000, -1.0, 2.0) == (-1.0, 2.0),
        "t=149999",
    )?;
    expect(
        phase(150_000, 150_000, -1.0, 2.0) == (2.0, -1.0),
        "t=150000",
    )?;
    expect(
        phase(300_000, 150_000, -1.0, 2.0) == (-1.0, 2.0),
        "t=300000",
    )
}

fn q_additivity() -> Result<(), String> {
    let mut rng = SeededRng::new(4);
    let split = PtSplit::new(vec![8, 8], 8, 0.25);
    let pair = QPair::new(12, &split, &mut rng);
    for _ in 0..10 {
        let obs: Vec<f64> = (0..12).map(|_| rng.next_f64()).collect();
        let p = pair.permanent.forward(&obs).map_err(|e| e.to_string())?;
        let t = pair.transient.forward(&obs).map_err(|e| e.to_string())?;
        let c = pair.combined(&obs).map_err(|e| e.to_string())?;
        for a in 0..4 {
            expect(c[a] == p[a] + t[a], "combined must equal the sum")?;
        }
    }
    Ok(())
}

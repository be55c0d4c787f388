//! End-to-end acceptance checks. Runs every criterion, prints one line per
//! criterion, and exits non-zero if any fails.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use qnet_core::algebra::{
    add_log_loss, dephasing_bell_fidelity, grid_cost, purify_fidelity, swap_fidelity, swap_formal, swap_inverse,
    to_log_loss, FormalFidelity, GridSpec, GridStrategy, LogLoss,
};
use qnet_core::montecarlo::{bell_fidelity, dephase_bell, estimate};
use qnet_core::reduction::available_rewrites;
use qnet_core::routing::{brute_force_best, SearchKind};
use qnet_core::topologies::{random_network, random_strategy, wheatstone, CostRange};
use qnet_core::{
    evaluate_strategy, reduce_to_fixpoint, route, CostVector, Fidelity, NetworkGraph, OperationCosts, RouteRequest,
    StrategyTree, SuccessProb,
};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn fid(v: f64) -> Fidelity {
    Fidelity::new(v).unwrap()
}

fn prob(v: f64) -> SuccessProb {
    SuccessProb::new(v).unwrap()
}

fn check(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

const SAMPLES: usize = 10_000;

fn algebra_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut u = || fid(rng.random_range(0.0..=1.0));
    let mut worst_assoc: f64 = 0.0;
    let mut worst_inverse: f64 = 0.0;
    for _ in 0..SAMPLES {
        let (a, b, c) = (u(), u(), u());
        check(swap_fidelity(a, b) == swap_fidelity(b, a), || {
            format!("S not commutative at {a:?},{b:?}")
        })?;
        if let (Ok(ab), Ok(ba)) = (purify_fidelity(a, b), purify_fidelity(b, a)) {
            check(ab == ba, || format!("P not commutative at {a:?},{b:?}"))?;
        }
        let d = (swap_fidelity(swap_fidelity(a, b), c).value() - swap_fidelity(a, swap_fidelity(b, c)).value()).abs();
        worst_assoc = worst_assoc.max(d);
        check(swap_fidelity(a, Fidelity::ONE) == a, || format!("S(f,1) != f at {a:?}"))?;
        check(purify_fidelity(a, Fidelity::HALF).unwrap() == a, || {
            format!("P(f,1/2) != f at {a:?}")
        })?;
        let l = to_log_loss(prob(a.value()));
        check(add_log_loss(l, to_log_loss(SuccessProb::ONE)) == l, || {
            "log-loss identity".into()
        })?;
        check(add_log_loss(l, LogLoss::ZERO) == l, || "log-loss zero".into())?;
    }
    // Purification triples stay 0.01 away from the singular pair {0, 1}.
    let regular = |x: Fidelity, y: Fidelity| {
        let (x, y) = (x.value(), y.value());
        x * y + (1.0 - x) * (1.0 - y) >= 0.01
    };
    let mut tested = 0;
    while tested < SAMPLES {
        let (a, b, c) = (u(), u(), u());
        let (Ok(ab), Ok(bc)) = (purify_fidelity(a, b), purify_fidelity(b, c)) else {
            continue;
        };
        if !(regular(a, b) && regular(b, c) && regular(ab, c) && regular(a, bc)) {
            continue;
        }
        let d = (purify_fidelity(ab, c).unwrap().value() - purify_fidelity(a, bc).unwrap().value()).abs();
        worst_assoc = worst_assoc.max(d);
        tested += 1;
    }
    check(worst_assoc <= 1e-12, || format!("associativity error {worst_assoc:e}"))?;
    let mut tested = 0;
    while tested < SAMPLES {
        let f = u();
        if (f.value() - 0.5).abs() >= 0.05 {
            let one = swap_formal(FormalFidelity::new(f.value()), swap_inverse(f).unwrap()).value();
            worst_inverse = worst_inverse.max((one - 1.0).abs());
            tested += 1;
        }
        if f.value() > 0.0 && f.value() < 1.0 {
            let half = purify_fidelity(f, fid(1.0 - f.value())).unwrap().value();
            worst_inverse = worst_inverse.max((half - 0.5).abs());
        }
    }
    check(worst_inverse <= 1e-9, || format!("inverse error {worst_inverse:e}"))?;
    Ok(format!("assoc err {worst_assoc:.1e}, inverse err {worst_inverse:.1e}"))
}

fn degradation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    for _ in 0..SAMPLES {
        let mut draw = || loop {
            let v: f64 = rng.random_range(0.5..1.0);
            if v > 0.5 {
                return fid(v);
            }
        };
        let (a, b) = (draw(), draw());
        if swap_fidelity(a, b).value() >= a.value().min(b.value()) {
            violations += 1;
        }
        if purify_fidelity(a, b).unwrap().value() < a.value().max(b.value()) {
            violations += 1;
        }
    }
    check(violations == 0, || format!("{violations} violations"))?;
    Ok(format!("{SAMPLES} pairs, 0 violations"))
}

fn confluence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let costs = CostRange {
        fidelity: 0.55..=1.0,
        success: 0.5..=1.0,
    };
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let leaves = rng.random_range(2..=40);
        let ops = OperationCosts {
            swap_success: prob(rng.random_range(0.8..=1.0)),
            purify_success: prob(rng.random_range(0.8..=1.0)),
            physical_acceptance: rng.random_bool(0.5),
        };
        let (g, _) = random_strategy(&mut rng, leaves, &costs, ops);
        let mut results = Vec::new();
        for _ in 0..20 {
            let mut h = g.clone();
            loop {
                let options = available_rewrites(&h);
                let Some(rw) = options.choose(&mut rng) else { break };
                h = rw.apply(&h).unwrap().0;
            }
            check(h.channel_count() == 1, || "random order got stuck".into())?;
            results.push(h.channels().next().unwrap().cost);
        }
        for i in 0..2 {
            let values: Vec<f64> = results
                .iter()
                .map(|c| if i == 0 { c.fidelity.value() } else { c.success.value() })
                .collect();
            let spread =
                values.iter().cloned().fold(f64::MIN, f64::max) - values.iter().cloned().fold(f64::MAX, f64::min);
            worst = worst.max(spread);
        }
    }
    check(worst <= 1e-9, || format!("spread {worst:e}"))?;
    Ok(format!("100 graphs x 20 orders, max spread {worst:.1e}"))
}

fn within_4se(hat: f64, expected: f64, n: f64) -> bool {
    (hat - expected).abs() <= 4.0 * (expected * (1.0 - expected) / n).sqrt()
}

fn agrees(tree: &StrategyTree, g: &NetworkGraph, expected: CostVector, seed: u64) -> Result<(), String> {
    let est = estimate(tree, g, 1_000_000, seed).map_err(|e| e.to_string())?;
    let f = est.fidelity_hat.ok_or("nothing delivered")?;
    check(
        within_4se(est.success_hat, expected.success.value(), est.samples as f64)
            && within_4se(f, expected.fidelity.value(), est.delivered as f64),
        || format!("{tree}: estimate ({f}, {}) vs {expected:?}", est.success_hat),
    )
}

fn mc_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let costs = CostRange {
        fidelity: 0.55..=1.0,
        success: 0.55..=1.0,
    };
    for seed in 0..50 {
        let leaves = rng.random_range(1..=10);
        let (g, tree) = random_strategy(&mut rng, leaves, &costs, OperationCosts::default());
        let expected = evaluate_strategy(&tree, &g).map_err(|e| e.to_string())?;
        agrees(&tree, &g, expected, seed)?;
    }
    let (l, r) = (StrategyTree::leaf("p"), StrategyTree::leaf("q"));
    let mut g = NetworkGraph::new(OperationCosts::default());
    for (n, role) in [
        ("A", qnet_core::NodeRole::Endpoint),
        ("B", qnet_core::NodeRole::Endpoint),
        ("x", qnet_core::NodeRole::Router),
    ] {
        g.add_node(n, role).unwrap();
    }
    let mut swap_g = g.clone();
    swap_g
        .add_channel("p", "A", "x", CostVector::new(0.9, 1.0).unwrap())
        .unwrap();
    swap_g
        .add_channel("q", "x", "B", CostVector::new(0.9, 1.0).unwrap())
        .unwrap();
    agrees(
        &StrategyTree::swap(l.clone(), r.clone()),
        &swap_g,
        CostVector::new(0.82, 1.0).unwrap(),
        100,
    )?;
    g.add_channel("p", "A", "B", CostVector::new(0.7, 1.0).unwrap())
        .unwrap();
    g.add_channel("q", "A", "B", CostVector::new(0.7, 1.0).unwrap())
        .unwrap();
    agrees(
        &StrategyTree::purify(l, r),
        &g,
        CostVector::new(0.8448275862068965, 0.58).unwrap(),
        101,
    )?;
    Ok("50 random trees, S(0.9,0.9) and P(0.7,0.7) with acceptance, 1e6 samples each".into())
}

fn oracle_routing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let costs = CostRange {
        fidelity: 0.55..=1.0,
        success: 0.5..=1.0,
    };
    let permissive = prob(f64::MIN_POSITIVE);
    let (mut instances, mut compared, mut gaps) = (0, 0, 0);
    while instances < 200 {
        let routers = rng.random_range(1..=4);
        let channels = rng.random_range(1..=8);
        let ops = OperationCosts {
            swap_success: prob(rng.random_range(0.8..=1.0)),
            purify_success: prob(rng.random_range(0.8..=1.0)),
            physical_acceptance: rng.random_bool(0.7),
        };
        let g = random_network(&mut rng, routers, channels, &costs, ops);
        let oracle = brute_force_best(&g, "A", "B", permissive).map_err(|e| e.to_string())?;
        let result = route(&g, &RouteRequest::new("A", "B", permissive)).map_err(|e| e.to_string())?;
        let Some((tree, cost)) = oracle else {
            check(result.search == SearchKind::Infeasible, || {
                "route found a strategy the oracle did not".into()
            })?;
            continue;
        };
        instances += 1;
        let got = result.cost.ok_or("route infeasible on a connected pair")?;
        let candidates: BTreeSet<&str> = result.candidate_channels.iter().map(String::as_str).collect();
        if tree.leaves().iter().all(|c| candidates.contains(c)) {
            check((got.fidelity.value() - cost.fidelity.value()).abs() <= 1e-9, || {
                format!("unexplained mismatch: route {got:?} vs oracle {cost:?}")
            })?;
            compared += 1;
        } else {
            check(got.fidelity.value() <= cost.fidelity.value() + 1e-9, || {
                "route beat the oracle".into()
            })?;
            gaps += 1;
        }
    }
    Ok(format!(
        "{instances} graphs: {compared} matched, {gaps} harvest-coverage gaps, 0 unexplained"
    ))
}

fn area_law() -> Outcome {
    for f in [0.6, 0.75, 0.9] {
        for strategy in [GridStrategy::PurifyThenSwap, GridStrategy::SwapThenPurify] {
            let cost = |b: u32, d: u32| {
                let spec = GridSpec {
                    breadth: b,
                    depth: d,
                    channel_fidelity: fid(f),
                    channel_success: prob(0.9),
                    strategy,
                };
                grid_cost(&spec, &OperationCosts::ideal()).unwrap()
            };
            for b in 1..=8 {
                for d in 1..=8 {
                    let here = cost(b, d);
                    check(here.success.value() == 0.9f64.powf((b * d) as f64), || {
                        format!("success at b={b} D={d}")
                    })?;
                    if b < 8 {
                        check(cost(b + 1, d).fidelity > here.fidelity, || {
                            format!("f={f} not increasing in b at {b},{d}")
                        })?;
                    }
                    if d < 8 {
                        check(cost(b, d + 1).fidelity < here.fidelity, || {
                            format!("f={f} not decreasing in D at {b},{d}")
                        })?;
                    }
                }
            }
        }
    }
    Ok("exact P^(bD); monotone for f in {0.6, 0.75, 0.9}, b,D in 1..8".into())
}

fn dephasing_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..=100 {
        let p = prob(i as f64 / 100.0);
        let m = bell_fidelity(&dephase_bell(p)).map_err(|e| e.to_string())?.value();
        let closed = dephasing_bell_fidelity(p).value();
        worst = worst
            .max((m - closed).abs())
            .max((closed - (1.0 + p.value()) / 2.0).abs());
    }
    check(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("101 points, max deviation {worst:.1e}"))
}

fn wheatstone_bridge() -> Outcome {
    let g = wheatstone(CostVector::new(0.9, 0.9).unwrap(), OperationCosts::default());
    let reduced = reduce_to_fixpoint(&g).map_err(|e| e.to_string())?;
    check(reduced.trace.steps.is_empty() && reduced.graph == g, || {
        "bridge was rewritten".into()
    })?;
    let threshold = prob(0.3);
    let result = route(&g, &RouteRequest::new("A", "B", threshold)).map_err(|e| e.to_string())?;
    check(result.search == SearchKind::ExhaustiveSearch, || {
        format!("search {:?}", result.search)
    })?;
    let (tree, cost) = brute_force_best(&g, "A", "B", threshold)
        .map_err(|e| e.to_string())?
        .ok_or("oracle infeasible")?;
    check(
        result.strategy.as_ref() == Some(&tree) && result.cost == Some(cost),
        || format!("route {:?} vs oracle {cost:?}", result.cost),
    )?;
    Ok(format!("ExhaustiveSearch, fidelity {}", cost.fidelity.value()))
}

fn qnet(args: &[&str], threads: Option<&str>) -> Result<(Vec<u8>, i32), String> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qnet"));
    cmd.current_dir(data).args(args).env_remove("QNET_THREADS");
    if let Some(t) = threads {
        cmd.env("QNET_THREADS", t);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    Ok((out.stdout, out.status.code().unwrap_or(-1)))
}

fn determinism() -> Outcome {
    let commands: [&[&str]; 4] = [
        &["reduce", "two_path.json", "--trace"],
        &[
            "route",
            "wheatstone.json",
            "--source",
            "A",
            "--target",
            "B",
            "--min-success",
            "0.3",
        ],
        &[
            "route",
            "two_path.json",
            "--source",
            "A",
            "--target",
            "B",
            "--min-success",
            "0.99",
        ],
        &["simulate", "two_path.json", "--samples", "1000000", "--seed", "42"],
    ];
    for args in commands {
        let reference = qnet(args, None)?;
        for threads in [Some("1"), Some("4"), Some("1"), Some("4")] {
            let run = qnet(args, threads)?;
            check(run == reference, || {
                format!("`qnet {}` differs with QNET_THREADS={threads:?}", args.join(" "))
            })?;
        }
    }
    Ok("reduce/route/simulate byte-identical over 5 runs, QNET_THREADS in {unset, 1, 4}".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("algebra laws", Duration::from_secs(5), algebra_laws),
        ("degradation/improvement", Duration::from_secs(1), degradation),
        ("confluence", Duration::from_secs(30), confluence),
        ("Monte-Carlo vs analytic", Duration::from_secs(60), mc_agreement),
        ("oracle routing equivalence", Duration::from_secs(120), oracle_routing),
        ("area law", Duration::from_secs(1), area_law),
        ("dephasing oracle", Duration::from_secs(1), dephasing_oracle),
        ("Wheatstone bridge", Duration::from_secs(5), wheatstone_bridge),
        ("determinism", Duration::from_secs(30), determinism),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (status, detail) = match outcome {
            Ok(detail) if elapsed <= limit => ("PASS", detail),
            Ok(detail) => ("FAIL", format!("{detail}; took longer than {limit:?}")),
            Err(why) => ("FAIL", why),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "criterion {}: {status} {name} ({:.2}s) {detail}",
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}

//! Exit criteria. Every criterion runs in a single test so the report
//! prints one PASS/FAIL line per criterion before the final assertion.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{example_params, random_tuples, CORPUS_SEED};
use intervention::designer;
use intervention::model::{self, ActionProfile, SystemParams};
use intervention::oracle::{self, OracleSolution};
use intervention::sim;
use intervention::sweep;

/// tau*(18) for N=5, p_l=0.2, p_h=0.8, T=100, as computed by the LP oracle.
const TAU_STAR_18: f64 = 0.373_173_946_418_799;

const CORPUS_FEASIBLE_TARGET: usize = 1000;
const MC_REPLICATIONS: u64 = 1_000_000;
const MC_SEED: u64 = 1;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || {
        format!("took {elapsed:?}, limit {limit:?}")
    })
}

fn ac1_throughput_constants() -> Outcome {
    let p = example_params();
    let start = Instant::now();
    let th = model::throughputs(&p);
    let elapsed = start.elapsed();
    ensure((th.coop - 0.08192).abs() <= 1e-15, || {
        format!("coop = {}", th.coop)
    })?;
    ensure((th.defect - 0.32768).abs() <= 1e-15, || {
        format!("defect = {}", th.defect)
    })?;
    within_time(elapsed, Duration::from_millis(1))?;
    Ok(format!(
        "coop={:.17} defect={:.17} in {elapsed:?}",
        th.coop, th.defect
    ))
}

fn ac2_feasibility_window() -> Outcome {
    let p = example_params();
    let start = Instant::now();
    let verdicts: Vec<bool> = (1..=100)
        .map(|t| designer::check_feasibility(&p, t).unwrap().feasible)
        .collect();
    let elapsed = start.elapsed();
    for (i, &feasible) in verdicts.iter().enumerate() {
        let t = i + 1;
        let expected = (2..=20).contains(&t);
        ensure(feasible == expected, || {
            format!("t={t}: feasible={feasible}")
        })?;
    }
    within_time(elapsed, Duration::from_millis(100))?;
    Ok(format!(
        "feasible exactly for t=2..20, sweep in {elapsed:?}"
    ))
}

fn ac3_optimal_test_period() -> Outcome {
    let p = example_params();
    let res = sweep::sweep(&p).map_err(|e| e.to_string())?;
    ensure(res.best_t == Some(18), || {
        format!("best_t = {:?}", res.best_t)
    })?;
    ensure((0.365..=0.375).contains(&res.best_throughput), || {
        format!("best_throughput = {}", res.best_throughput)
    })?;

    let inst = oracle::build_instance(&p, 18).map_err(|e| e.to_string())?;
    let sol = oracle::solve_greedy(&inst);
    ensure(oracle::certify(&inst, &sol), || {
        "oracle solution not certified".into()
    })?;
    let th = model::throughputs(&p);
    let from_oracle = 5.0 * (1.0 - p.intervention_weight(18) * sol.objective) * th.coop;
    ensure((from_oracle - TAU_STAR_18).abs() <= 1e-12, || {
        format!("oracle tau*(18) = {from_oracle:.17}")
    })?;
    ensure((res.best_throughput - TAU_STAR_18).abs() <= 1e-12, || {
        format!("designer tau*(18) = {:.17}", res.best_throughput)
    })?;
    Ok(format!("best_t=18 tau*={:.15}", res.best_throughput))
}

fn ac4_threshold_schedule() -> Outcome {
    let res = sweep::sweep(&example_params()).map_err(|e| e.to_string())?;
    let got = sweep::kbar_schedule(&res);
    let expected: Vec<(usize, usize)> = (2..=20)
        .map(|t| {
            let k = match t {
                2..=7 => 1,
                8..=13 => 2,
                14..=18 => 3,
                _ => 4,
            };
            (t, k)
        })
        .collect();
    ensure(got == expected, || format!("schedule {got:?}"))?;
    Ok("kbar = 1 (2..7), 2 (8..13), 3 (14..18), 4 (19,20)".into())
}

fn ac5_constraint_binds() -> Outcome {
    let p = example_params();
    let mut worst: f64 = 0.0;
    for t in 2..=20 {
        let out = designer::design_rule(&p, t).map_err(|e| e.to_string())?;
        let rule = out.rule.ok_or(format!("t={t} infeasible"))?;
        let gap = designer::constraint_gap(&p, &rule).map_err(|e| e.to_string())?;
        worst = worst.max(gap.abs());
    }
    ensure(worst <= 1e-9, || format!("worst |gap| = {worst:e}"))?;
    Ok(format!("worst |gap| = {worst:.3e}"))
}

fn ac6_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst_level: f64 = 0.0;
    let mut worst_objective: f64 = 0.0;

    let mut check = |p: &SystemParams, t: usize| -> Result<bool, String> {
        let out = designer::design_rule(p, t).map_err(|e| e.to_string())?;
        let inst = oracle::build_instance(p, t).map_err(|e| e.to_string())?;
        let greedy = oracle::solve_greedy(&inst);
        ensure(greedy.feasible == out.feasible, || {
            format!("feasibility disagrees at {p:?} t={t}")
        })?;
        let Some(rule) = out.rule else {
            return Ok(false);
        };
        let diff = rule
            .levels()
            .iter()
            .zip(&greedy.levels)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst_level = worst_level.max(diff);
        let as_solution = OracleSolution::from_rule(&inst, &rule).map_err(|e| e.to_string())?;
        worst_objective = worst_objective.max((as_solution.objective - greedy.objective).abs());
        ensure(diff <= 1e-9, || {
            format!("levels differ by {diff:e} at {p:?} t={t}")
        })?;
        ensure(oracle::certify(&inst, &as_solution), || {
            format!("designer rule not certified at {p:?} t={t}")
        })?;
        ensure(oracle::certify(&inst, &greedy), || {
            format!("greedy rule not certified at {p:?} t={t}")
        })?;
        Ok(true)
    };

    let base = example_params();
    for t in 2..=20 {
        ensure(check(&base, t)?, || format!("example t={t} infeasible"))?;
    }
    let mut drawn = 0usize;
    let mut feasible = 0usize;
    for (p, t) in random_tuples(CORPUS_SEED) {
        drawn += 1;
        if check(&p, t)? {
            feasible += 1;
        }
        if feasible >= CORPUS_FEASIBLE_TARGET {
            break;
        }
    }
    let elapsed = start.elapsed();
    within_time(elapsed, Duration::from_secs(30))?;
    Ok(format!(
        "{drawn} random tuples ({feasible} feasible), worst level diff {worst_level:.2e}, \
         worst objective diff {worst_objective:.2e}, {elapsed:?}"
    ))
}

fn ac7_structural_properties() -> Outcome {
    let mut drawn = 0usize;
    let mut feasible = 0usize;
    for (p, t) in random_tuples(CORPUS_SEED) {
        drawn += 1;
        for k in 0..t {
            let here = designer::ln_likelihood_ratio(&p, k, t).unwrap();
            let next = designer::ln_likelihood_ratio(&p, k + 1, t).unwrap();
            ensure(next < here, || {
                format!("L not decreasing in k at {p:?} t={t} k={k}")
            })?;
        }
        for k in 0..=t {
            let now = designer::ln_likelihood_ratio(&p, k, t).unwrap();
            let later = designer::ln_likelihood_ratio(&p, k, t + 1).unwrap();
            ensure(later > now, || {
                format!("L not increasing in t at {p:?} t={t} k={k}")
            })?;
        }
        let out = designer::design_rule(&p, t).map_err(|e| e.to_string())?;
        if let (Some(rule), Some(kbar)) = (&out.rule, out.threshold_kbar) {
            feasible += 1;
            ensure(designer::has_threshold_shape(rule.levels(), 1e-12), || {
                format!("not threshold shaped at {p:?} t={t}: {:?}", rule.levels())
            })?;
            ensure(kbar <= out.cutoff_k0, || {
                format!("kbar > k0 at {p:?} t={t}")
            })?;

            // kbar monotone over the whole sweep of this parameter set
            let res = sweep::sweep(&p).map_err(|e| e.to_string())?;
            let sched = sweep::kbar_schedule(&res);
            ensure(sched.windows(2).all(|w| w[0].1 <= w[1].1), || {
                format!("kbar decreases at {p:?}: {sched:?}")
            })?;
        }
        if feasible >= CORPUS_FEASIBLE_TARGET {
            break;
        }
    }
    Ok(format!("{drawn} random tuples ({feasible} feasible)"))
}

fn ac8_monte_carlo() -> Outcome {
    let p = example_params();
    let rule = designer::design_rule(&p, 18)
        .map_err(|e| e.to_string())?
        .rule
        .ok_or("t=18 infeasible")?;
    let coop_analytic =
        model::expected_payoff(&p, &rule, &ActionProfile::all_cooperate(&p), 0).unwrap();
    let dev_analytic =
        model::expected_payoff(&p, &rule, &ActionProfile::one_defects(&p, 0).unwrap(), 0).unwrap();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    let start = Instant::now();
    let cmp = pool
        .install(|| sim::compare_deviation(&p, &rule, MC_REPLICATIONS, MC_SEED))
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    let z = |est: f64, se: f64, target: f64| (est - target).abs() / se;
    let z_coop = z(
        cmp.coop_payoff.mean,
        cmp.coop_payoff.std_error,
        coop_analytic,
    );
    let z_dev = z(
        cmp.deviation_payoff.mean,
        cmp.deviation_payoff.std_error,
        dev_analytic,
    );
    let z_gap = z(cmp.gap.mean, cmp.gap.std_error, 0.0);
    ensure(z_coop <= 3.0, || {
        format!("cooperation payoff off by {z_coop:.2} SE")
    })?;
    ensure(z_dev <= 3.0, || {
        format!("deviation payoff off by {z_dev:.2} SE")
    })?;
    ensure(z_gap <= 3.0, || {
        format!("incentive gap off by {z_gap:.2} SE")
    })?;
    within_time(elapsed, Duration::from_secs(60))?;
    Ok(format!(
        "coop {:.6} ({z_coop:.2} SE), deviation {:.6} ({z_dev:.2} SE), gap {:.2e} ({z_gap:.2} SE), \
         analytic {coop_analytic:.6}, {elapsed:?} single-threaded",
        cmp.coop_payoff.mean, cmp.deviation_payoff.mean, cmp.gap.mean
    ))
}

fn ac9_non_monotone_curve() -> Outcome {
    let res = sweep::sweep(&example_params()).map_err(|e| e.to_string())?;
    let curve: Vec<f64> = (2..=20)
        .map(|t| res.row(t).unwrap().optimal_throughput)
        .collect();
    let non_decreasing = curve.windows(2).all(|w| w[0] <= w[1]);
    let non_increasing = curve.windows(2).all(|w| w[0] >= w[1]);
    ensure(!non_decreasing && !non_increasing, || {
        format!("curve is monotone: {curve:?}")
    })?;
    let dips = curve.windows(2).filter(|w| w[1] < w[0]).count();
    Ok(format!(
        "{dips} decreasing steps among {} increments",
        curve.len() - 1
    ))
}

fn ac10_curve_acceptance_documented(bundle_passed: bool) -> Outcome {
    let readme = include_str!("../../../README.md");
    ensure(readme.contains("validated by self-consistency"), || {
        "README does not state how the tau*(t) curve is accepted".into()
    })?;
    ensure(bundle_passed, || "criteria 3-7 or 9 failed".into())?;
    Ok("README states the curve acceptance; criteria 3-7 and 9 pass".into())
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let outcome =
        panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".to_string()));
    match outcome {
        Ok(detail) => {
            println!("[PASS] {name}: {detail}");
            true
        }
        Err(detail) => {
            println!("[FAIL] {name}: {detail}");
            false
        }
    }
}

#[test]
fn acceptance() {
    let r1 = run("AC1 throughput constants", ac1_throughput_constants);
    let r2 = run("AC2 feasibility window", ac2_feasibility_window);
    let r3 = run("AC3 optimal test period", ac3_optimal_test_period);
    let r4 = run("AC4 threshold schedule", ac4_threshold_schedule);
    let r5 = run("AC5 incentive constraint binds", ac5_constraint_binds);
    let r6 = run("AC6 oracle equivalence", ac6_oracle_equivalence);
    let r7 = run("AC7 structural properties", ac7_structural_properties);
    let r8 = run("AC8 Monte Carlo agreement", ac8_monte_carlo);
    let r9 = run("AC9 non-monotone tau*(t)", ac9_non_monotone_curve);
    let bundle = r3 && r4 && r5 && r6 && r7 && r9;
    let r10 = run("AC10 curve acceptance documented", || {
        ac10_curve_acceptance_documented(bundle)
    });
    let all = [r1, r2, r3, r4, r5, r6, r7, r8, r9, r10];
    let passed = all.iter().filter(|&&ok| ok).count();
    println!("acceptance: {passed}/{} criteria passed", all.len());
    assert_eq!(passed, all.len());
}

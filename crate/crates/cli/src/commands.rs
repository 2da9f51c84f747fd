//! One function per command; each returns the JSON report and its CSV table.

use std::collections::HashMap;

use serde_json::{json, Value};
use thermo_mdp::info::{feedback_work_gap_capped, generalized_second_law_gap_capped, InfoExchangeReport};
use thermo_mdp::info_mdp::{
    calibrate_beta, optimize_policy_uncertainty, parametric_info_objective_capped, InfoObjectiveReport, SolveOutcome,
};
use thermo_mdp::kl_control::{kl_value_backward, optimal_control};
use thermo_mdp::maxent::{saridis_gibbs, solve_for_kl_value};
use thermo_mdp::mdp::{bellman_backward, enumerate_paths_capped, sample_paths, DecisionRule};
use thermo_mdp::thermo::{
    backward_chain, entropy_production, exponential_work_average, heat_work_ledger, second_law_gap, BackwardMode,
};
use thermo_mdp::Trajectory;

use crate::error::CliError;
use crate::output::{fmt_f64, Table};
use crate::scenario::{Scenario, SolverKind};
use crate::Mode;

pub struct Report {
    /// Base file name under `--out`.
    pub name: &'static str,
    pub json: Value,
    pub table: Table,
}

fn backward_mode(m: Mode) -> BackwardMode {
    match m {
        Mode::Reversal => BackwardMode::Reversal,
        Mode::DetailedBalance => BackwardMode::DetailedBalance,
    }
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Reversal => "reversal",
        Mode::DetailedBalance => "detailed-balance",
    }
}

fn solver_name(k: SolverKind) -> &'static str {
    match k {
        SolverKind::Alternating => "alternating",
        SolverKind::BruteForce => "brute-force",
    }
}

fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn validate(sc: &Scenario) -> Result<Report, CliError> {
    let sizes = sc.check()?;
    let mut table = Table::new(["block", "n_states"]);
    let mut counts = serde_json::Map::new();
    for (block, n) in &sizes {
        table.push(vec![block.to_string(), n.to_string()]);
        counts.insert(block.to_string(), json!(n));
    }
    let scenario = serde_json::to_value(sc).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(Report {
        name: "validate",
        json: json!({ "command": "validate", "valid": true, "state_counts": counts, "scenario": scenario }),
        table,
    })
}

pub fn bellman(sc: &Scenario) -> Result<Report, CliError> {
    let mdp = sc.mdp()?;
    let (values, rule) = bellman_backward(&mdp, sc.terminal())?;
    let DecisionRule::Deterministic(actions) = rule else {
        unreachable!("the Bellman recursion returns a deterministic rule")
    };
    let mut table = Table::new(["t", "state", "value", "action"]);
    for t in 1..=mdp.horizon() {
        for s in 0..mdp.n_states() {
            let a = if t < mdp.horizon() {
                actions[t - 1][s].to_string()
            } else {
                String::new()
            };
            table.push(vec![t.to_string(), s.to_string(), fmt_f64(values.get(t, s)), a]);
        }
    }
    Ok(Report {
        name: "solve-bellman",
        json: json!({
            "command": "solve bellman",
            "horizon": mdp.horizon(),
            "values": values.rows(),
            "policy": actions,
        }),
        table,
    })
}

pub fn kl(sc: &Scenario) -> Result<Report, CliError> {
    let passive = sc.passive()?;
    let (values, desirability) = kl_value_backward(&passive);
    let control = optimal_control(&passive, &values)?;
    let (n, horizon) = (passive.n_states(), passive.horizon());
    let mut header = vec![
        "t".to_string(),
        "state".into(),
        "value".into(),
        "log_desirability".into(),
    ];
    header.extend((0..n).map(|j| format!("control_{j}")));
    let mut table = Table::new(header);
    for t in 1..=horizon {
        for s in 0..n {
            let mut row = vec![
                t.to_string(),
                s.to_string(),
                fmt_f64(values.get(t, s)),
                fmt_f64(desirability.log_z(t, s)),
            ];
            if t < horizon {
                row.extend(control.kernel(t).row(s).iter().map(|&p| fmt_f64(p)));
            } else {
                row.extend((0..n).map(|_| String::new()));
            }
            table.push(row);
        }
    }
    let log_z: Vec<Vec<f64>> = (1..=horizon)
        .map(|t| (0..n).map(|s| desirability.log_z(t, s)).collect())
        .collect();
    let kernels: Vec<Vec<Vec<f64>>> = control.kernels().iter().map(|k| k.to_rows()).collect();
    Ok(Report {
        name: "solve-kl",
        json: json!({
            "command": "solve kl",
            "horizon": horizon,
            "values": values.rows(),
            "log_desirability": log_z,
            "control": kernels,
        }),
        table,
    })
}

pub fn maxent(sc: &Scenario, k: f64) -> Result<Report, CliError> {
    let block = sc.maxent_block()?;
    let mut table = Table::new(["index", "base", "value", "control"]);
    if let Some(costs) = &block.costs {
        let sol = saridis_gibbs(costs, k, block.tol)?;
        let base = 1.0 / costs.len() as f64;
        for (i, (&v, &c)) in costs.iter().zip(&sol.control).enumerate() {
            table.push(vec![i.to_string(), fmt_f64(base), fmt_f64(v), fmt_f64(c)]);
        }
        let lambda = sol.gibbs_lambda();
        return Ok(Report {
            name: "solve-maxent",
            json: json!({
                "command": "solve maxent",
                "program": "gibbs",
                "target": k,
                "control": sol.control,
                "mu": sol.mu,
                "lambda": sol.lambda,
                "gibbs_lambda": lambda,
                "achieved": sol.achieved,
                "entropy": sol.entropy,
                "entropy_identity_residual": sol.entropy - (1.0 + lambda + sol.mu * sol.achieved),
            }),
            table,
        });
    }
    let passive = sc.passive()?;
    if block.state >= passive.n_states() || block.time == 0 || block.time >= passive.horizon() {
        return Err(CliError::Scenario(
            "maxent.state/time out of range for the passive block".into(),
        ));
    }
    let (values, _) = kl_value_backward(&passive);
    let control = optimal_control(&passive, &values)?;
    let (s, t) = (block.state, block.time);
    let p = passive.kernel().row(s);
    let next = values.at(t + 1);
    let q = passive.state_cost()[s];
    let sol = solve_for_kl_value(p, next, k - q, block.tol)?;
    let optimal = control.kernel(t).row(s);
    for (i, (&v, &c)) in next.iter().zip(&sol.control).enumerate() {
        table.push(vec![i.to_string(), fmt_f64(p[i]), fmt_f64(v), fmt_f64(c)]);
    }
    Ok(Report {
        name: "solve-maxent",
        json: json!({
            "command": "solve maxent",
            "program": "kl_value",
            "target": k,
            "state": s,
            "time": t,
            "optimal_value": values.get(t, s),
            "control": sol.control,
            "mu": sol.mu,
            "lambda": sol.lambda,
            "achieved": sol.achieved + q,
            "entropy": sol.entropy,
            "optimal_control": optimal,
            "max_deviation_from_optimal": max_abs(sol.control.iter().zip(optimal).map(|(a, b)| a - b)),
        }),
        table,
    })
}

pub fn thermo_audit(sc: &Scenario, mode: Mode) -> Result<Report, CliError> {
    let chain = sc.thermo_chain()?;
    let energy = sc.energy_model()?;
    let cap = sc.path_cap()?;
    let ens = enumerate_paths_capped(&chain, cap)?;
    let bwd = backward_chain(&chain, backward_mode(mode), energy.as_ref())?;
    let rep = entropy_production(&ens, &chain, &bwd)?;
    let split = max_abs(
        (0..ens.len())
            .map(|i| rep.sigma[i] - rep.system_term[i] - rep.bath_term[i])
            .filter(|v| v.is_finite()),
    );

    let mut ledgers = Vec::new();
    if let Some(em) = &energy {
        for path in ens.paths() {
            ledgers.push(heat_work_ledger(em, &Trajectory(path.clone()))?);
        }
    }
    let mut table = Table::new(["path", "p_fwd", "p_bwd", "sigma", "system_term", "bath_term", "Q", "W"]);
    for (i, path) in ens.paths().iter().enumerate() {
        let (q, w) = match ledgers.get(i) {
            Some(l) => (fmt_f64(l.total_heat), fmt_f64(l.total_work)),
            None => (String::new(), String::new()),
        };
        table.push(vec![
            path_label(path),
            fmt_f64(ens.probs()[i]),
            fmt_f64(bwd.log_path_probability(path).exp()),
            fmt_f64(rep.sigma[i]),
            fmt_f64(rep.system_term[i]),
            fmt_f64(rep.bath_term[i]),
            q,
            w,
        ]);
    }

    let mut json = json!({
        "command": "thermo audit",
        "mode": mode_name(mode),
        "horizon": chain.horizon(),
        "n_paths": ens.len(),
        "mean_sigma": rep.mean_sigma,
        "ift": rep.ift,
        "infinite_paths": rep.infinite_paths,
        "max_sigma_abs": max_abs(rep.sigma.iter().copied().filter(|v| v.is_finite())),
        "max_split_residual": split,
    });
    if let Some(em) = &energy {
        let gap = second_law_gap(&ens, em)?;
        json["energy"] = json!({
            "mean_work": gap.mean_work,
            "delta_f": gap.delta_f,
            "second_law_gap": gap.gap,
            "exp_work_average": exponential_work_average(&ens, em)?,
            "exp_free_energy_change": (-em.beta() * gap.delta_f).exp(),
            "max_first_law_residual": max_abs(ledgers.iter().flat_map(|l| l.first_law_residual.iter().copied())),
        });
    }
    let samples = thermo_samples(sc, &chain, &ens, &rep.sigma, energy.as_ref())?;
    if !samples.is_empty() {
        json["seed"] = json!(sc.seed);
        json["samples"] = Value::Array(samples);
    }
    Ok(Report {
        name: "thermo-audit",
        json,
        table,
    })
}

fn path_label(path: &[usize]) -> String {
    path.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("-")
}

fn thermo_samples(
    sc: &Scenario,
    chain: &thermo_mdp::MarkovChain,
    ens: &thermo_mdp::TrajectoryEnsemble,
    sigma: &[f64],
    energy: Option<&thermo_mdp::thermo::EnergyModel>,
) -> Result<Vec<Value>, CliError> {
    let count = sc.thermo.as_ref().map_or(0, |t| t.sample_paths);
    if count == 0 {
        return Ok(Vec::new());
    }
    let index: HashMap<&[usize], usize> = ens.paths().iter().enumerate().map(|(i, p)| (p.as_slice(), i)).collect();
    let mut out = Vec::with_capacity(count);
    for traj in sample_paths(chain, sc.seed, count) {
        let mut v = json!({ "path": traj.states(), "sigma": sigma[index[traj.states()]] });
        if let Some(em) = energy {
            let l = heat_work_ledger(em, &traj)?;
            v["work"] = json!(l.total_work);
            v["heat"] = json!(l.total_heat);
        }
        out.push(v);
    }
    Ok(out)
}

fn exchange_json(info: &InfoExchangeReport) -> Value {
    json!({
        "i_ini": info.i_ini,
        "i_fin": info.i_fin,
        "i_tr_per_step": info.i_tr_per_step,
        "i_tr_reduced_per_step": info.i_tr_reduced_per_step,
        "i_tr_total": info.i_tr_total,
        "theta": info.theta,
    })
}

/// Long-form audit table: `k` is filled only for per-step terms.
fn audit_row(t: &mut Table, section: &str, k: Option<usize>, quantity: &str, v: f64) {
    t.push(vec![
        section.into(),
        k.map(|k| k.to_string()).unwrap_or_default(),
        quantity.into(),
        fmt_f64(v),
    ]);
}

fn exchange_rows(info: &InfoExchangeReport, t: &mut Table) {
    audit_row(t, "coupled", None, "i_ini", info.i_ini);
    audit_row(t, "coupled", None, "i_fin", info.i_fin);
    for (k, v) in info.i_tr_per_step.iter().enumerate() {
        audit_row(t, "coupled", Some(k + 1), "i_tr", *v);
    }
    for (k, v) in info.i_tr_reduced_per_step.iter().enumerate() {
        audit_row(t, "coupled", Some(k + 1), "i_tr_reduced", *v);
    }
    audit_row(t, "coupled", None, "i_tr_total", info.i_tr_total);
    audit_row(t, "coupled", None, "theta", info.theta);
}

fn objective_json(r: &InfoObjectiveReport) -> Value {
    json!({
        "expected_cost": r.expected_cost,
        "transfer_terms": r.transfer_terms,
        "transfer_terms_reduced": r.transfer_terms_reduced,
        "transfer_total": r.transfer_terms.iter().sum::<f64>(),
        "final_term": r.final_term,
        "initial_term": r.initial_term,
        "theta": r.theta,
        "beta": r.beta,
        "objective": r.objective,
        "regularized_objective": r.regularized_objective,
        "include_final_term": r.include_final_term,
    })
}

fn objective_rows(section: &str, r: &InfoObjectiveReport, t: &mut Table) {
    audit_row(t, section, None, "beta", r.beta);
    audit_row(t, section, None, "expected_cost", r.expected_cost);
    for (k, v) in r.transfer_terms.iter().enumerate() {
        audit_row(t, section, Some(k + 1), "i_tr", *v);
    }
    audit_row(t, section, None, "i_fin", r.final_term);
    audit_row(t, section, None, "i_ini", r.initial_term);
    audit_row(t, section, None, "theta", r.theta);
    audit_row(t, section, None, "objective", r.objective);
    audit_row(t, section, None, "regularized_objective", r.regularized_objective);
}

pub fn info_audit(sc: &Scenario, mode: Mode) -> Result<Report, CliError> {
    let cap = sc.path_cap()?;
    let parametric = sc.parametric()?;
    if sc.coupled.is_none() && parametric.is_none() {
        return Err(CliError::Scenario(
            "info audit needs a `coupled` block or `info.parametric`".into(),
        ));
    }
    let mut json = json!({ "command": "info audit", "mode": mode_name(mode) });
    let mut table = Table::new(["section", "k", "quantity", "value"]);
    if sc.coupled.is_some() {
        let (sys, energy) = sc.coupled()?;
        let g = generalized_second_law_gap_capped(&sys, backward_mode(mode), energy.as_ref(), cap)?;
        exchange_rows(&g.info, &mut table);
        audit_row(&mut table, "coupled", None, "mean_sigma", g.mean_sigma);
        audit_row(&mut table, "coupled", None, "gap", g.gap);
        audit_row(&mut table, "coupled", None, "ift", g.ift);
        audit_row(&mut table, "coupled", None, "ift_joint", g.ift_joint);
        json["coupled"] = json!({
            "horizon": sys.horizon(),
            "n_x": sys.n_x(),
            "n_d": sys.n_d(),
            "exchange": exchange_json(&g.info),
            "mean_sigma": g.mean_sigma,
            "gap": g.gap,
            "ift": g.ift,
            "ift_joint": g.ift_joint,
            "infinite_paths": g.infinite_paths,
        });
        let feedback = sc.coupled.as_ref().is_some_and(|b| b.x_kernels.is_none());
        if let (true, Some(em)) = (feedback, &energy) {
            let f = feedback_work_gap_capped(&sys, em, cap)?;
            audit_row(&mut table, "feedback", None, "mean_work", f.mean_work);
            audit_row(&mut table, "feedback", None, "mean_delta_f", f.mean_delta_f);
            audit_row(&mut table, "feedback", None, "i_last_control", f.i_last_control);
            audit_row(&mut table, "feedback", None, "literal_slack", f.literal_slack);
            audit_row(&mut table, "feedback", None, "derived_slack", f.derived_slack);
            json["feedback"] = json!({
                "mean_work": f.mean_work,
                "mean_delta_f": f.mean_delta_f,
                "beta": f.beta,
                "i_last_control": f.i_last_control,
                "literal_slack": f.literal_slack,
                "derived_slack": f.derived_slack,
            });
        }
    }
    if let Some((belief, block)) = parametric {
        let r = parametric_info_objective_capped(&belief, block.beta, block.include_final_term, cap)?;
        objective_rows("parametric", &r, &mut table);
        json["parametric"] = objective_json(&r);
    }
    Ok(Report {
        name: "info-audit",
        json,
        table,
    })
}

fn resolve_beta(sc: &Scenario, beta: Option<f64>) -> Result<f64, CliError> {
    let beta = beta
        .or(sc.info_block()?.beta)
        .ok_or_else(|| CliError::Usage("no --beta given and the info block has no `beta`".into()))?;
    if !(beta > 0.0) {
        return Err(CliError::Usage(format!("beta must be positive, got {beta}")));
    }
    Ok(beta)
}

fn outcome_json(outcome: &SolveOutcome) -> Value {
    let nu: Vec<Vec<Vec<Vec<f64>>>> = outcome.model.nu().iter().map(|k| k.to_tables()).collect();
    json!({
        "report": objective_json(&outcome.report),
        "iterations": outcome.iterations,
        "trace": outcome.trace,
        "nu0": outcome.model.nu0(),
        "nu": nu,
    })
}

pub fn solve_info(
    sc: &Scenario,
    beta: Option<f64>,
    include_final_term: bool,
    solver: Option<SolverKind>,
) -> Result<Report, CliError> {
    let problem = sc.policy_problem()?;
    let block = sc.info_block()?;
    let beta = resolve_beta(sc, beta)?;
    let kind = solver.unwrap_or(block.solver.kind);
    let flag = include_final_term || block.include_final_term;
    let opts = sc.solver_options(Some(kind), flag)?;
    let outcome = optimize_policy_uncertainty(&problem, beta, &opts)?;

    let mut table = Table::new(["step", "prev_state", "prev_policy", "policy", "probability"]);
    for (d, &p) in outcome.model.nu0().iter().enumerate() {
        table.push(vec![
            "0".into(),
            String::new(),
            String::new(),
            d.to_string(),
            fmt_f64(p),
        ]);
    }
    for (k, kernel) in outcome.model.nu().iter().enumerate() {
        for (s, ctx) in kernel.to_tables().iter().enumerate() {
            for (dp, row) in ctx.iter().enumerate() {
                let s_label = if k == 0 { String::new() } else { s.to_string() };
                for (d, &p) in row.iter().enumerate() {
                    table.push(vec![
                        (k + 1).to_string(),
                        s_label.clone(),
                        dp.to_string(),
                        d.to_string(),
                        fmt_f64(p),
                    ]);
                }
            }
        }
    }
    let mut json = outcome_json(&outcome);
    json["command"] = json!("solve info");
    json["beta"] = json!(beta);
    json["solver"] = json!(solver_name(kind));
    json["include_final_term"] = json!(flag);
    json["policies"] = json!(problem.policies());
    json["initial_policy_fixed"] = json!(problem.initial_policy().is_some());
    Ok(Report {
        name: "solve-info",
        json,
        table,
    })
}

pub fn calibrate(sc: &Scenario, state: usize, value: f64) -> Result<Report, CliError> {
    let problem = sc.policy_problem()?;
    if state >= problem.mdp().n_states() {
        return Err(CliError::Usage(format!(
            "--state {state} is not a state of the mdp block"
        )));
    }
    let opts = sc.calibration_options()?;
    let beta = calibrate_beta(&problem, state, value, &opts)?;
    let mut start = vec![0.0; problem.mdp().n_states()];
    start[state] = 1.0;
    let at = optimize_policy_uncertainty(&problem.with_initial_state(start)?, beta, &opts.solver)?;
    let pairs = [
        ("beta".to_string(), beta),
        ("temperature".to_string(), 1.0 / beta),
        ("known_value".to_string(), value),
        ("expected_cost".to_string(), at.report.expected_cost),
    ];
    Ok(Report {
        name: "calibrate-beta",
        json: json!({
            "command": "calibrate-beta",
            "reference_state": state,
            "known_value": value,
            "beta": beta,
            "temperature": 1.0 / beta,
            "expected_cost": at.report.expected_cost,
            "report": objective_json(&at.report),
        }),
        table: Table::key_values(&pairs),
    })
}

/// `points` inverse temperatures spaced geometrically from `from` to `to`.
pub fn beta_grid(from: f64, to: f64, points: usize) -> Result<Vec<f64>, CliError> {
    if !(from > 0.0 && to > 0.0 && from.is_finite() && to.is_finite()) || points == 0 {
        return Err(CliError::Usage(
            "sweep needs 0 < --from, --to < inf and --points >= 1".into(),
        ));
    }
    if points == 1 {
        return Ok(vec![from]);
    }
    let (a, b) = (from.ln(), to.ln());
    Ok((0..points)
        .map(|i| match i {
            0 => from,
            _ if i == points - 1 => to,
            _ => (a + (b - a) * i as f64 / (points - 1) as f64).exp(),
        })
        .collect())
}

pub fn sweep(sc: &Scenario, from: f64, to: f64, points: usize) -> Result<Report, CliError> {
    let problem = sc.policy_problem()?;
    let block = sc.info_block()?;
    let opts = sc.solver_options(None, block.include_final_term)?;
    let mut table = Table::new(["beta", "expected_cost", "i_tr_total", "i_fin", "objective"]);
    let mut rows = Vec::new();
    for beta in beta_grid(from, to, points)? {
        let r = optimize_policy_uncertainty(&problem, beta, &opts)?.report;
        let transfer: f64 = r.transfer_terms.iter().sum();
        table.push(vec![
            fmt_f64(beta),
            fmt_f64(r.expected_cost),
            fmt_f64(transfer),
            fmt_f64(r.final_term),
            fmt_f64(r.objective),
        ]);
        rows.push(json!({
            "beta": beta,
            "expected_cost": r.expected_cost,
            "i_tr_total": transfer,
            "i_fin": r.final_term,
            "objective": r.objective,
        }));
    }
    Ok(Report {
        name: "sweep-beta",
        json: json!({
            "command": "sweep beta",
            "solver": solver_name(block.solver.kind),
            "rows": rows,
        }),
        table,
    })
}

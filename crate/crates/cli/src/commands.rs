use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;

use packing_core::env::{run_batch, EnvConfig, GreedyAgent, RandomAgent};
use packing_core::instances::{build_dataset, Dataset, Instance, Mode};
use packing_core::oracle::{
    collect_decisions, inclusion_rates, play_with_mcts, rank_curves, write_inclusion_csv, write_rank_csv,
    MctsConfig, RolloutPolicy,
};
use packing_core::policy::{Checkpoint, PolicyPair};
use packing_core::seeding::derive_seed;
use packing_core::training::{adapt_online, evaluate, train_two_phase, EvalStats, TaskSource, TrainConfig};

use crate::artifacts::Artifacts;
use crate::config::{AgentName, RunConfig};
use crate::error::CliError;
use crate::report::{EvalReport, ReportRow};

fn env_for(cfg: &RunConfig, mode: Mode) -> EnvConfig {
    RunConfig { mode, ..cfg.clone() }.env()
}

fn load_datasets(cfg: &RunConfig, arts: &mut Artifacts) -> Result<Vec<Dataset>, CliError> {
    if cfg.datasets.is_empty() {
        return Err(CliError::Usage("at least one --dataset is required".into()));
    }
    cfg.datasets
        .iter()
        .map(|p| {
            let file = std::fs::File::open(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            let ds = Dataset::read_jsonl(std::io::BufReader::new(file))?;
            arts.input(p)?;
            Ok(ds)
        })
        .collect()
}

fn load_checkpoints(cfg: &RunConfig, arts: &mut Artifacts) -> Result<Vec<PolicyPair>, CliError> {
    cfg.checkpoints
        .iter()
        .map(|p| {
            if !p.exists() {
                return Err(CliError::Usage(format!("{}: no such checkpoint", p.display())));
            }
            let mut pair = Checkpoint::load(p)?.pair;
            if let Some(k) = cfg.k {
                pair.k = k;
            }
            arts.input(p)?;
            Ok(pair)
        })
        .collect()
}

fn require_checkpoints(pairs: &[PolicyPair], command: &str) -> Result<(), CliError> {
    if pairs.is_empty() {
        return Err(CliError::Usage(format!("`{command}` needs at least one --checkpoint")));
    }
    Ok(())
}

fn instances(ds: &Dataset) -> Vec<Instance> {
    ds.iter_instances().cloned().collect()
}

fn stats_of(results: &[packing_core::env::EpisodeResult]) -> EvalStats {
    EvalStats::from_results(results.iter().map(|r| r.uti).collect(), results.iter().map(|r| r.num_packed).collect())
}

fn print_outputs(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

pub fn gen(cfg: &RunConfig) -> Result<(), CliError> {
    let mut arts = Artifacts::begin(&cfg.out)?;
    let ds = build_dataset(cfg.subset, cfg.mode, cfg.seed, cfg.dataset_size());
    arts.write(&ds.file_name(), &ds.to_jsonl_bytes())?;
    println!("{}: {} distributions x {} instances", ds.file_name(), ds.size.n_dists, ds.size.n_instances);
    print_outputs(&arts.commit(cfg)?);
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let mut arts = Artifacts::begin(&cfg.out)?;
    let source = TaskSource::new(cfg.subset.item_set(), cfg.mode, cfg.episode_len);
    let tc = cfg.train_config();
    for &seed in &cfg.seeds {
        let out = train_two_phase(cfg.architecture(), &source, &tc, seed)?;
        let mut log = String::new();
        for entry in &out.log {
            log.push_str(&serde_json::to_string(entry)?);
            log.push('\n');
        }
        if let Some(last) = out.log.last() {
            println!("seed {seed}: {} epoch {} mean Uti {:.1}%", last.phase, last.epoch, 100.0 * last.mean_uti);
        }
        let mut ckpt = Checkpoint::new(out.result);
        ckpt.meta = serde_json::json!({ "seed": seed, "subset": cfg.subset, "mode": cfg.mode, "container": cfg.container });
        arts.write(&format!("checkpoint-seed{seed}.json"), ckpt.to_json().as_bytes())?;
        arts.write(&format!("train-log-seed{seed}.jsonl"), log.as_bytes())?;
    }
    print_outputs(&arts.commit(cfg)?);
    Ok(())
}

fn write_report(arts: &mut Artifacts, report: &EvalReport) -> Result<(), CliError> {
    arts.write("report.txt", report.to_table().as_bytes())?;
    arts.write("report.csv", report.to_csv().as_bytes())?;
    arts.write("report.json", report.to_json().as_bytes())?;
    print!("{}", report.to_table());
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let mut arts = Artifacts::begin(&cfg.out)?;
    let datasets = load_datasets(cfg, &mut arts)?;
    let pairs = load_checkpoints(cfg, &mut arts)?;
    if cfg.agent == AgentName::Policy {
        require_checkpoints(&pairs, "eval")?;
    }
    let mut rows = Vec::new();
    for ds in &datasets {
        let env = env_for(cfg, ds.mode);
        let insts = instances(ds);
        let (agent, per_seed) = match cfg.agent {
            AgentName::Policy => {
                ("policy", pairs.iter().map(|p| evaluate(p, &insts, &env)).collect::<Result<Vec<_>, _>>()?)
            }
            AgentName::Random => (
                "random",
                cfg.seeds
                    .iter()
                    .map(|s| Ok(stats_of(&run_batch(&insts, &env, *s, RandomAgent::new)?)))
                    .collect::<Result<Vec<_>, CliError>>()?,
            ),
            AgentName::Greedy => ("greedy", vec![stats_of(&run_batch(&insts, &env, 0, |_| GreedyAgent)?)]),
        };
        rows.push(ReportRow::pooled(&ds.subset, &ds.mode.to_string(), agent, &per_seed));
    }
    write_report(&mut arts, &EvalReport::new(rows))?;
    print_outputs(&arts.commit(cfg)?);
    Ok(())
}

pub fn adapt(cfg: &RunConfig) -> Result<(), CliError> {
    let mut arts = Artifacts::begin(&cfg.out)?;
    let datasets = load_datasets(cfg, &mut arts)?;
    let pairs = load_checkpoints(cfg, &mut arts)?;
    require_checkpoints(&pairs, "adapt")?;
    let mut rows = Vec::new();
    for ds in &datasets {
        let env = env_for(cfg, ds.mode);
        let insts = instances(ds);
        let source = TaskSource::new(ds.item_set().clone(), ds.mode, ds.size.episode_len);
        let (mut before, mut after) = (Vec::new(), Vec::new());
        for (i, pair) in pairs.iter().enumerate() {
            let tc = TrainConfig { env: env.clone(), k: pair.k, ..cfg.train_config() };
            let adapted = adapt_online(pair, &source, &ds.distributions, &tc, derive_seed(cfg.seed, i as u64))?.result;
            before.push(evaluate(pair, &insts, &env)?);
            after.push(evaluate(&adapted, &insts, &env)?);
            let stem = format!("{}-{}-{i}", ds.subset, ds.mode);
            arts.write(&format!("{stem}.before.json"), Checkpoint::new(pair.clone()).to_json().as_bytes())?;
            arts.write(&format!("{stem}.after.json"), Checkpoint::new(adapted).to_json().as_bytes())?;
        }
        let mode = ds.mode.to_string();
        let base = ReportRow::pooled(&ds.subset, &mode, "policy", &before);
        rows.push(base.with_adapted(&ReportRow::pooled(&ds.subset, &mode, "policy", &after)));
    }
    write_report(&mut arts, &EvalReport::new(rows))?;
    print_outputs(&arts.commit(cfg)?);
    Ok(())
}

#[derive(Serialize)]
struct OracleSummary {
    subset: String,
    mode: String,
    episodes: usize,
    unrestricted: f64,
    restricted: Option<f64>,
    k: Option<usize>,
}

pub fn oracle(cfg: &RunConfig) -> Result<(), CliError> {
    let mut arts = Artifacts::begin(&cfg.out)?;
    let datasets = load_datasets(cfg, &mut arts)?;
    let pairs = load_checkpoints(cfg, &mut arts)?;
    let pair = pairs.first();
    let mcts = MctsConfig {
        rollout: pair.map_or(RolloutPolicy::Greedy, |p| RolloutPolicy::Policy(p.clone())),
        ..cfg.mcts()
    };
    let mut csv = String::from("subset,distribution,instance,unrestricted,restricted\n");
    let mut summaries = Vec::new();
    for ds in &datasets {
        let slice = ds.slice(cfg.n_dists, cfg.n_instances);
        let env = env_for(cfg, ds.mode);
        let (mut u_sum, mut r_sum, mut n) = (0.0, 0.0, 0usize);
        for (d, insts) in slice.instances.iter().enumerate() {
            for (j, inst) in insts.iter().enumerate() {
                let spec = Some(&slice.distributions[d]);
                let c = MctsConfig { seed: derive_seed(cfg.seed, n as u64), ..mcts.clone() };
                let u = play_with_mcts(inst, spec, ds.mode, &env, &c, None)?;
                let r = pair.map(|p| play_with_mcts(inst, spec, ds.mode, &env, &c, Some(p))).transpose()?;
                let _ = writeln!(csv, "{},{d},{j},{u},{}", ds.subset, r.map(|x| x.to_string()).unwrap_or_default());
                u_sum += u;
                r_sum += r.unwrap_or(0.0);
                n += 1;
            }
        }
        let nf = n.max(1) as f64;
        let s = OracleSummary {
            subset: ds.subset.clone(),
            mode: ds.mode.to_string(),
            episodes: n,
            unrestricted: u_sum / nf,
            restricted: pair.map(|_| r_sum / nf),
            k: pair.map(|p| p.k),
        };
        match s.restricted {
            Some(r) => println!(
                "{} {}: unrestricted {:.1}%  restricted (k={}) {:.1}%  ({} episodes)",
                s.subset,
                s.mode,
                100.0 * s.unrestricted,
                s.k.unwrap_or(0),
                100.0 * r,
                n
            ),
            None => println!("{} {}: unrestricted {:.1}%  ({} episodes)", s.subset, s.mode, 100.0 * s.unrestricted, n),
        }
        summaries.push(s);
    }
    arts.write("oracle.csv", csv.as_bytes())?;
    arts.write("oracle.json", (serde_json::to_string_pretty(&summaries)? + "\n").as_bytes())?;
    print_outputs(&arts.commit(cfg)?);
    Ok(())
}

pub fn analyze(cfg: &RunConfig) -> Result<(), CliError> {
    let mut arts = Artifacts::begin(&cfg.out)?;
    let datasets = load_datasets(cfg, &mut arts)?;
    let pairs = load_checkpoints(cfg, &mut arts)?;
    require_checkpoints(&pairs, "analyze")?;
    let ks = cfg.k_values()?;
    for ds in &datasets {
        let slice = ds.slice(cfg.n_dists, cfg.n_instances);
        let env = env_for(cfg, ds.mode);
        let records = collect_decisions(
            &pairs[0],
            &instances(&slice),
            Some(&slice.distributions),
            ds.mode,
            &env,
            &cfg.mcts(),
            cfg.max_steps,
        )?;
        let rates = inclusion_rates(&records, &ks);
        let stem = format!("{}-{}", ds.subset, ds.mode);
        let mut buf = Vec::new();
        write_inclusion_csv(&mut buf, &rates)?;
        arts.write(&format!("{stem}-inclusion.csv"), &buf)?;
        let mut buf = Vec::new();
        write_rank_csv(&mut buf, &rank_curves(&records))?;
        arts.write(&format!("{stem}-rank.csv"), &buf)?;
        let line: Vec<String> = rates.iter().map(|(k, r)| format!("k={k}: {:.1}%", 100.0 * r)).collect();
        println!("{stem} ({} decisions): {}", records.len(), line.join("  "));
    }
    print_outputs(&arts.commit(cfg)?);
    Ok(())
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    match cfg.command.as_str() {
        "gen" => gen(cfg),
        "train" => train(cfg),
        "adapt" => adapt(cfg),
        "eval" => eval(cfg),
        "oracle" => oracle(cfg),
        "analyze" => analyze(cfg),
        other => Err(CliError::Usage(format!("unknown command `{other}`"))),
    }
}

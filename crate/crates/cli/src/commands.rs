use std::path::{Path, PathBuf};
use std::time::Instant;

use mpc_warmstart::datagen::{self, read_dataset, write_dataset, DatasetHeader};
use mpc_warmstart::formats::{read_problem, spec_hash};
use mpc_warmstart::neural::{load_model, save_model, train as train_model};
use mpc_warmstart::planner::{closed_loop_eval, open_loop_eval};
use mpc_warmstart::{
    assemble_batch, build_benchmark, explicit_implicit_plan, BatchQp, Benchmark, Error, InitMode, LtiProblemSpec, MlpModel, Result,
    SampleRecord, SolverOptions, Termination, TrainConfig, Vector, WalkConfig,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::report::{self, ConfigHash};
use crate::{EvalClosedArgs, EvalOpenArgs, GenDataArgs, ProblemArgs, SolveArgs, TrainArgs};

struct Problem {
    spec: LtiProblemSpec,
    qp: BatchQp,
    benchmark: Option<Benchmark>,
}

fn load_problem(args: &ProblemArgs) -> Result<Problem> {
    let (spec, benchmark) = match (&args.sys, &args.problem) {
        (Some(s), _) => {
            let id: Benchmark = s.parse()?;
            log::info!("building {id} (terminal set included)");
            (build_benchmark(id)?, Some(id))
        }
        (None, Some(path)) => (read_problem(&std::fs::read_to_string(path)?)?, None),
        (None, None) => return Err(Error::Config("one of --sys or --problem is required".into())),
    };
    let qp = assemble_batch(&spec)?;
    Ok(Problem { spec, qp, benchmark })
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<T>().map_err(|_| Error::Config(format!("bad {what} entry '{s}'"))))
        .collect()
}

fn parse_criteria(text: &str) -> Result<Vec<Termination>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<Termination>().map_err(|e| Error::Config(e.to_string())))
        .collect()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn header_for(qp: &BatchQp, count: usize) -> DatasetHeader {
    DatasetHeader { n: qp.dims.n, d_p: qp.dims.d_p, d_eq: qp.dims.d_eq, d_in: qp.dims.d_in, count }
}

fn load_records(path: &Path, qp: &BatchQp) -> Result<Vec<SampleRecord>> {
    let (header, records) = read_dataset(path)?;
    if header != header_for(qp, header.count) {
        return Err(Error::Config(format!("{} does not match the problem dimensions", path.display())));
    }
    Ok(records)
}

fn load_optional_model(path: Option<&PathBuf>, qp: &BatchQp) -> Result<Option<MlpModel>> {
    let Some(path) = path else { return Ok(None) };
    let model = load_model(path)?;
    if model.input_dim() != qp.dims.n || model.output_dim() != qp.dims.d_p {
        return Err(Error::Config(format!("model {:?} does not fit the problem dimensions", model.widths)));
    }
    Ok(Some(model))
}

/// Manifest timestamp: `SOURCE_DATE_EPOCH` when set, so reruns can be
/// byte-identical.
fn timestamp_override() -> Option<u64> {
    std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok())
}

pub fn gen_data(args: &GenDataArgs) -> Result<()> {
    let p = load_problem(&args.problem)?;
    let goals: Vec<usize> = parse_list(&args.goals, "goal count")?;
    let [n_train, n_buffer, n_test] = goals[..] else {
        return Err(Error::Config("--goals needs three counts: train,buffer,test".into()));
    };
    let step_d = match args.step_d {
        Some(d) => d,
        None => datagen::default_step(&p.spec.x_set)?,
    };
    let config = WalkConfig { n_train, n_buffer, n_test, step_d, seed: args.seed };
    let opts = SolverOptions::default();
    let start = Instant::now();
    let mut data = mpc_warmstart::generate_data(&p.spec, &p.qp, &config, &opts)?;
    if let Some(t) = timestamp_override() {
        data.manifest.generated_at = t;
    }
    ensure_dir(&args.out)?;
    write_dataset(&args.out.join("train.mpcd"), &header_for(&p.qp, data.train.len()), &data.train)?;
    write_dataset(&args.out.join("test.mpcd"), &header_for(&p.qp, data.test.len()), &data.test)?;
    std::fs::write(args.out.join("manifest.txt"), data.manifest.to_text())?;
    std::fs::write(args.out.join("problem.txt"), mpc_warmstart::formats::write_problem(&p.spec))?;

    let all = data.train.len() + data.test.len();
    let ok = data
        .train
        .iter()
        .chain(&data.test)
        .filter(|r| p.qp.check_primal_feasible(&r.z, &r.x, 1e-8).feasible && r.lambda.iter().all(|l| *l >= 0.0))
        .count();
    println!("{}", p.spec.name);
    println!("  train records   {}", data.train.len());
    println!("  buffer records  {}", data.buffer_count);
    println!("  test records    {}", data.test.len());
    println!("  step size       {step_d}");
    println!("  re-check pass   {ok}/{all}");
    println!(
        "  walks           {} probes, {} infeasible stops, {} empty",
        data.stats.probes, data.stats.infeasible_stops, data.stats.empty_walks
    );
    log::info!("generated in {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

pub fn train(args: &TrainArgs, threads: usize) -> Result<()> {
    let p = load_problem(&args.problem)?;
    let data_path = args.data.clone().unwrap_or_else(|| args.out.join("train.mpcd"));
    let records = load_records(&data_path, &p.qp)?;
    let widths = match &args.widths {
        Some(w) => parse_list(w, "width")?,
        None => match p.benchmark {
            Some(b) => b.default_widths(),
            None => vec![p.qp.dims.n, 32, 32, p.qp.dims.d_p],
        },
    };
    let mut config = TrainConfig::new(widths);
    config.epochs = args.epochs;
    config.batch_size = args.batch;
    config.learning_rate = args.lr;
    config.validation_fraction = args.val_fraction;
    config.seed = args.seed;
    config.threads = threads;
    let start = Instant::now();
    let (model, log) = train_model(&records, &p.qp, &config)?;
    ensure_dir(&args.out)?;
    save_model(&model, &args.out.join("model.json"))?;
    std::fs::write(args.out.join("loss.txt"), log.to_text())?;
    let first = log.epochs.first().unwrap();
    let last = log.epochs.last().unwrap();
    println!("{} parameters, {} steps", model.parameter_count(), log.steps);
    println!("  epoch 0        train {:.4e}  val {:.4e}", first.train_loss, first.val_loss);
    println!("  epoch {:<8} train {:.4e}  val {:.4e}", last.epoch, last.train_loss, last.val_loss);
    log::info!("trained in {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

pub fn eval_open(args: &EvalOpenArgs) -> Result<()> {
    let p = load_problem(&args.problem)?;
    let data_path = args.data.clone().unwrap_or_else(|| args.out.join("test.mpcd"));
    let records = load_records(&data_path, &p.qp)?;
    let model = load_optional_model(args.model.as_ref(), &p.qp)?;
    let criteria = parse_criteria(&args.criteria)?;
    let hash = ConfigHash::new()
        .field("command", "eval-open")
        .field("spec", &spec_hash(&p.spec))
        .file("data", &data_path)?
        .optional_file("model", args.model.as_deref())?
        .field("criteria", &args.criteria)
        .finish();
    let start = Instant::now();
    let rows = open_loop_eval(&p.qp, &records, model.as_ref(), &criteria, &SolverOptions::default());
    log::info!("open-loop evaluation took {:.1}s", start.elapsed().as_secs_f64());
    let (table, csv) = report::open_loop(&rows, &hash);
    ensure_dir(&args.out)?;
    std::fs::write(args.out.join("open_loop.txt"), &table)?;
    std::fs::write(args.out.join("open_loop.csv"), &csv)?;
    print!("{table}");
    Ok(())
}

pub fn eval_closed(args: &EvalClosedArgs) -> Result<()> {
    let p = load_problem(&args.problem)?;
    let data_path = args.data.clone().unwrap_or_else(|| args.out.join("test.mpcd"));
    let records = load_records(&data_path, &p.qp)?;
    let model = load_optional_model(args.model.as_ref(), &p.qp)?;
    let criteria = parse_criteria(&args.criteria)?;
    let mut x0s: Vec<Vector> = records.into_iter().map(|r| r.x).filter(|x| !p.spec.xf_set.contains(x, 0.0)).collect();
    x0s.shuffle(&mut ChaCha8Rng::seed_from_u64(args.seed));
    x0s.truncate(args.x0_count);
    let mut methods = Vec::new();
    for &c in &criteria {
        methods.push((InitMode::Cold, c));
        if model.is_some() {
            methods.push((InitMode::Network, c));
        }
    }
    let hash = ConfigHash::new()
        .field("command", "eval-closed")
        .field("spec", &spec_hash(&p.spec))
        .file("data", &data_path)?
        .optional_file("model", args.model.as_deref())?
        .field("criteria", &args.criteria)
        .field("x0_count", &args.x0_count.to_string())
        .field("max_steps", &args.max_steps.to_string())
        .field("seed", &args.seed.to_string())
        .finish();
    let rows = closed_loop_eval(&p.spec, &p.qp, model.as_ref(), &methods, &x0s, &SolverOptions::default(), args.max_steps)?;
    for r in &rows {
        log::info!("{}/{}: {:.2}s wall clock", r.init, r.criterion, r.wall_seconds);
    }
    let (table, csv) = report::closed_loop(&rows, &hash);
    ensure_dir(&args.out)?;
    std::fs::write(args.out.join("closed_loop.txt"), &table)?;
    std::fs::write(args.out.join("closed_loop.csv"), &csv)?;
    print!("{table}");
    Ok(())
}

pub fn solve(args: &SolveArgs) -> Result<()> {
    let p = load_problem(&args.problem)?;
    let x = Vector::from_vec(parse_list(&args.x, "state")?);
    if x.len() != p.qp.dims.n {
        return Err(Error::Config(format!("state has {} entries, the problem needs {}", x.len(), p.qp.dims.n)));
    }
    let criterion: Termination = args.criterion.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
    let model = load_optional_model(args.warm.as_ref(), &p.qp)?;
    let plan = explicit_implicit_plan(&p.qp, &x, model.as_ref(), criterion, &SolverOptions::default())?;
    let j = p.qp.objective(&plan.z, &x);
    let eta = plan.stats.eta.map_or("n/a".to_string(), |e| format!("{e:.6e}"));
    println!("status      feasible");
    println!("criterion   {criterion}");
    println!("warm start  {}", if plan.stats.nn_used { "network" } else { "cold" });
    println!("J           {j:.9e}");
    println!("eta         {eta}");
    println!("certified   {}", plan.stats.certified);
    println!("iterations  {} (phase I {}, phase II {})", plan.stats.total_iters(), plan.stats.phase1_iters, plan.stats.phase2_iters);
    println!("u0          {}", report::join(plan.u0.as_slice()));
    if args.full {
        let cert = mpc_warmstart::certify(&p.qp, &plan.z, &x);
        println!("z           {}", report::join(plan.z.as_slice()));
        println!("nu          {}", report::join(cert.nu.as_slice()));
        println!("lambda      {}", report::join(cert.lambda.as_slice()));
    }
    Ok(())
}

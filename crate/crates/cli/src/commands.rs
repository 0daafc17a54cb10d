//! Subcommand implementations. Each one reads its inputs from the output
//! directory, stages every file it produces and commits them together.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use symmflow::datasets::{dataset_from_csv, parse_point_csv};
use symmflow::eval::{bayes_classify, mmd_rbf, mmd_report_csv, sweep_steps, MmdRow};
use symmflow::flow::{
    draw_noise, loss_and_grad_with_draws, loss_with_draws, train, train_model, FlowLayout, Objective,
};
use symmflow::nn::checkpoint::{format_float, from_checkpoint_str, to_checkpoint_string};
use symmflow::nn::{compare_grads, finite_diff_grad, GradCheckReport};
use symmflow::ode::{classify, generate};
use symmflow::{ClassCodebook, CoupledSample, Dataset, FlowModel, MlpParams, SeededRng};

use crate::config::ExperimentConfig;
use crate::output::StagedOutputs;
use crate::svg;

pub const TRAIN_CSV: &str = "train.csv";
pub const TEST_CSV: &str = "test.csv";
pub const CONFIG_TOML: &str = "config.toml";
pub const CHECKPOINT: &str = "checkpoint.txt";
pub const LOSS_CSV: &str = "loss.csv";
pub const SAMPLES_CSV: &str = "samples.csv";
pub const SAMPLES_SVG: &str = "samples.svg";
pub const MMD_CSV: &str = "mmd.csv";
pub const PREDICTIONS_CSV: &str = "predictions.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_SVG: &str = "sweep.svg";

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: ExperimentConfig,
    pub out: PathBuf,
}


impl RunContext {
    /// Explicit config file, else the config echoed into `out`, else defaults;
    /// then the seed override.
    pub fn resolve(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<Self> {
        let echoed = out.join(CONFIG_TOML);
        let mut cfg = match config {
            Some(p) => ExperimentConfig::load(p)?,
            None if echoed.exists() => ExperimentConfig::load(&echoed)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(Self {
            config: cfg.resolved()?,
            out: out.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn read(&self, name: &str, hint: &str) -> Result<String> {
        let p = self.path(name);
        std::fs::read_to_string(&p).with_context(|| format!("reading {} ({hint})", p.display()))
    }

    fn dataset(&self, name: &str) -> Result<Dataset> {
        let text = self.read(name, "run gen-data first")?;
        dataset_from_csv(&text, self.config.num_classes()).with_context(|| format!("in {name}"))
    }

    fn layout(&self, dim_x: usize) -> Result<FlowLayout> {
        Ok(FlowLayout::new(dim_x, self.config.codebook.dim_y, self.config.time_encoding()?))
    }

    fn model(&self, dim_x: usize) -> Result<FlowModel> {
        let text = self.read(CHECKPOINT, "run train first")?;
        let params: MlpParams = from_checkpoint_str(&text).context("in checkpoint")?;
        FlowModel::new(self.layout(dim_x)?, params, self.config.objective()?)
            .context("checkpoint does not match the configured network")
    }

    fn config_text(&self) -> String {
        self.config.to_toml_string()
    }
}

pub fn gen_data(ctx: &RunContext) -> Result<()> {
    let (train, test) = ctx.config.generate_data()?;
    let mut out = StagedOutputs::new();
    out.add(ctx.path(TRAIN_CSV), train.to_csv());
    out.add(ctx.path(TEST_CSV), test.to_csv());
    out.add(ctx.path(CONFIG_TOML), ctx.config_text());
    out.commit()?;
    println!("wrote {} train and {} test points to {}", train.len(), test.len(), ctx.out.display());
    Ok(())
}

pub struct TrainArgs {
    pub objective: Option<String>,
    pub epochs: Option<usize>,
    pub resume: bool,
}

fn loss_csv(history: &[f64], first_epoch: usize) -> String {
    let mut s = String::new();
    for (i, l) in history.iter().enumerate() {
        let _ = writeln!(s, "{},{}", first_epoch + i, format_float(*l));
    }
    s
}

pub fn train_cmd(ctx: &RunContext, args: &TrainArgs) -> Result<()> {
    let mut ctx = ctx.clone();
    if let Some(o) = &args.objective {
        ctx.config.train.objective = o.clone();
    }
    let epochs = args.epochs.unwrap_or(ctx.config.train.epochs);
    if epochs == 0 && !args.resume {
        bail!("--epochs must be at least 1 unless resuming");
    }
    let data = ctx.dataset(TRAIN_CSV)?;
    let codebook = ctx.config.codebook()?;
    let started = Instant::now();
    let mut out = StagedOutputs::new();

    if args.resume {
        let model = ctx.model(data.dim_x())?;
        let previous = ctx.read(LOSS_CSV, "resume needs the loss history")?;
        let done = previous.lines().skip(1).filter(|l| !l.trim().is_empty()).count();
        if epochs == 0 {
            out.add(ctx.path(CHECKPOINT), to_checkpoint_string(&model.params));
            out.commit()?;
            println!("resumed with 0 epochs; checkpoint unchanged");
            return Ok(());
        }
        let mut tc = ctx.config.train_config()?;
        tc.epochs = epochs;
        let mut rng = SeededRng::new(ctx.config.seed.wrapping_add(done as u64));
        let outcome = train_model(model, &data, &codebook, &tc, &mut rng)?;
        let mut loss = previous;
        if !loss.ends_with('\n') {
            loss.push('\n');
        }
        loss.push_str(&loss_csv(&outcome.loss_history, done + 1));
        out.add(ctx.path(CHECKPOINT), to_checkpoint_string(&outcome.model.params));
        out.add(ctx.path(LOSS_CSV), loss);
        out.commit()?;
        report_loss(&outcome.loss_history, started);
        return Ok(());
    }

    ctx.config.train.epochs = epochs;
    ctx.config.validate()?;
    let tc = ctx.config.train_config()?;
    let outcome = train(&data, &codebook, &tc)?;
    out.add(ctx.path(CHECKPOINT), to_checkpoint_string(&outcome.model.params));
    out.add(ctx.path(LOSS_CSV), format!("epoch,mean_loss\n{}", loss_csv(&outcome.loss_history, 1)));
    out.add(ctx.path(CONFIG_TOML), ctx.config_text());
    out.commit()?;
    report_loss(&outcome.loss_history, started);
    Ok(())
}

fn report_loss(history: &[f64], started: Instant) {
    if let Some(last) = history.last() {
        println!(
            "final loss {} after {} epochs ({:.1}s)",
            format_float(*last),
            history.len(),
            started.elapsed().as_secs_f64()
        );
    }
}

pub struct SampleArgs {
    pub class: usize,
    pub n: usize,
    pub steps: Option<usize>,
    pub svg: bool,
}

pub fn sample_cmd(ctx: &RunContext, args: &SampleArgs) -> Result<()> {
    let codebook = ctx.config.codebook()?;
    if args.class >= codebook.num_classes() {
        bail!("--class {} out of range for {} classes", args.class, codebook.num_classes());
    }
    let test = ctx.dataset(TEST_CSV).ok();
    let dim_x = test.as_ref().map_or(2, |d| d.dim_x());
    let model = ctx.model(dim_x)?;
    let mut solver = ctx.config.solver_config()?;
    if let Some(s) = args.steps {
        solver.steps = s;
    }
    let mut rng = SeededRng::new(ctx.config.seed);
    let samples = generate(&model, &codebook, args.class, args.n, &mut rng, &solver)?;

    let mut csv = String::new();
    for c in 0..dim_x {
        let _ = write!(csv, "x{c},");
    }
    csv.push_str("class\n");
    for p in &samples {
        for v in p {
            csv.push_str(&format_float(*v));
            csv.push(',');
        }
        let _ = writeln!(csv, "{}", args.class);
    }
    let mut out = StagedOutputs::new();
    out.add(ctx.path(SAMPLES_CSV), csv);

    if let Some(test) = &test {
        let real = test.class_points(args.class);
        if samples.len() >= 2 && real.len() >= 2 {
            let est = mmd_rbf(&samples, &real, None)?;
            let row = MmdRow {
                pair: format!("generated-vs-test-class{}", args.class),
                mmd2: est.mmd2,
                bandwidth: est.bandwidth,
            };
            println!("mmd2 {} (bandwidth {})", format_float(row.mmd2), format_float(row.bandwidth));
            out.add(ctx.path(MMD_CSV), mmd_report_csv(&[row]));
        }
        if args.svg && dim_x >= 2 {
            let xy = |ps: &[Vec<f64>]| ps.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>();
            let name = format!("test class {}", args.class);
            let series = [
                svg::Series { name: &name, points: xy(&real) },
                svg::Series { name: "generated", points: xy(&samples) },
            ];
            out.add(ctx.path(SAMPLES_SVG), svg::scatter("generated samples", &series));
        }
    }
    out.commit()?;
    println!("wrote {} samples of class {}", samples.len(), args.class);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Ode,
    Bayes,
}

pub struct ClassifyArgs {
    pub input: Option<PathBuf>,
    pub method: Method,
    pub steps: Option<usize>,
    pub k: Option<usize>,
    pub n_mc: Option<usize>,
}

pub fn classify_cmd(ctx: &RunContext, args: &ClassifyArgs) -> Result<()> {
    let input = args.input.clone().unwrap_or_else(|| ctx.path(TEST_CSV));
    let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
    let table = parse_point_csv::<f64>(&text).with_context(|| format!("in {}", input.display()))?;
    let codebook = ctx.config.codebook()?;
    let model = ctx.model(table.dim_x)?;
    let mut rng = SeededRng::new(ctx.config.seed);
    let mut preds = Vec::with_capacity(table.points.len());
    let mut csv = String::from("index,predicted");

    match args.method {
        Method::Ode => {
            let mut solver = ctx.config.solver_config()?;
            if let Some(s) = args.steps {
                solver.steps = s;
            }
            let k = args.k.unwrap_or(ctx.config.eval.trajectories);
            for c in 0..codebook.dim_y() {
                let _ = write!(csv, ",y0_{c}");
            }
            csv.push('\n');
            for (i, x) in table.points.iter().enumerate() {
                let c = classify(&model, &codebook, x, &mut rng, &solver, k)?;
                let _ = write!(csv, "{i},{}", c.class_idx);
                for v in &c.mean_y0 {
                    let _ = write!(csv, ",{}", format_float(*v));
                }
                csv.push('\n');
                preds.push(c.class_idx);
            }
        }
        Method::Bayes => {
            let n_mc = args.n_mc.unwrap_or(ctx.config.eval.n_mc);
            for c in 0..codebook.num_classes() {
                let _ = write!(csv, ",p{c}");
            }
            csv.push('\n');
            for (i, x) in table.points.iter().enumerate() {
                let post = bayes_classify(&model, &codebook, x, n_mc, &mut rng)?;
                let _ = write!(csv, "{i},{}", post.argmax());
                for p in &post.probs {
                    let _ = write!(csv, ",{}", format_float(*p));
                }
                csv.push('\n');
                preds.push(post.argmax());
            }
        }
    }
    if let Some(labels) = &table.labels {
        if !labels.is_empty() {
            let acc = symmflow::eval::accuracy(&preds, labels)?;
            let _ = writeln!(csv, "# accuracy,{}", format_float(acc));
            println!("accuracy {acc:.4} on {} points", labels.len());
        }
    }
    let mut out = StagedOutputs::new();
    out.add(ctx.path(PREDICTIONS_CSV), csv);
    out.commit()?;
    Ok(())
}

pub fn parse_steps_list(s: &str) -> Result<Vec<usize>> {
    let steps = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|e| anyhow!("bad step count `{}`: {e}", p.trim()))
        })
        .collect::<Result<Vec<_>>>()?;
    if steps.is_empty() || steps[0] == 0 || steps.windows(2).any(|w| w[0] >= w[1]) {
        bail!("step counts must be positive and strictly increasing");
    }
    Ok(steps)
}

pub struct SweepArgs {
    pub steps: Option<String>,
    pub svg: bool,
}

pub fn sweep_cmd(ctx: &RunContext, args: &SweepArgs) -> Result<symmflow::eval::SweepResult> {
    let steps = match &args.steps {
        Some(s) => parse_steps_list(s)?,
        None => ctx.config.eval.sweep_steps.clone(),
    };
    let test = ctx.dataset(TEST_CSV)?;
    let codebook = ctx.config.codebook()?;
    let model = ctx.model(test.dim_x())?;
    let points: Vec<Vec<f64>> = test.points().map(|p| p.to_vec()).collect();
    let result = sweep_steps(
        &model,
        &codebook,
        &points,
        test.labels(),
        &steps,
        ctx.config.scheme()?,
        ctx.config.seed,
        ctx.config.eval.trajectories,
    )?;
    let mut out = StagedOutputs::new();
    out.add(ctx.path(SWEEP_CSV), result.to_csv());
    if args.svg {
        let labels: Vec<String> = result.rows.iter().map(|r| r.steps.to_string()).collect();
        let values: Vec<f64> = result.rows.iter().map(|r| r.accuracy).collect();
        out.add(ctx.path(SWEEP_SVG), svg::accuracy_chart("accuracy vs steps", &labels, &values));
    }
    out.commit()?;
    for r in &result.rows {
        println!("{:>4} steps  accuracy {:.4}", r.steps, r.accuracy);
    }
    Ok(result)
}

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_STEP: f64 = 1e-5;

/// Analytic versus central-difference gradients of the training loss on a
/// small random network with frozen noise. `corrupt` is added to the first
/// analytic weight coordinate.
pub fn gradcheck(seed: u64, objective: Objective, corrupt: Option<f64>) -> Result<GradCheckReport> {
    let mut rng = SeededRng::new(seed);
    let layout = FlowLayout::new(2, 1, symmflow::flow::TimeEncoding::Raw);
    let params: MlpParams = MlpParams::init(&layout.widths(&[16, 16]), symmflow::nn::Activation::Silu, &mut rng)?;
    let codebook = ClassCodebook::with_default_beta(2, 1)?;
    let batch = (0..8)
        .map(|i| {
            Ok(CoupledSample {
                x: rng.normal_vec(2),
                y: codebook.dequantize(i % 2, &mut rng)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let draws = draw_noise(batch.len(), 2, 1, &mut rng);
    let (_, mut analytic) = loss_and_grad_with_draws(&layout, &params, objective, &batch, &draws)?;
    if let Some(delta) = corrupt {
        analytic.layers[0].weight.as_mut_slice()[0] += delta;
    }
    let numeric = finite_diff_grad(
        |p| loss_with_draws(&layout, p, objective, &batch, &draws).expect("shapes fixed"),
        &params,
        GRADCHECK_STEP,
    );
    Ok(compare_grads(&analytic, &numeric)?)
}

pub fn gradcheck_cmd(ctx: &RunContext, corrupt: Option<f64>) -> Result<()> {
    let report = gradcheck(ctx.config.seed, ctx.config.objective()?, corrupt)?;
    for w in &report.per_tensor {
        println!(
            "layer {} {:?}: worst index {} analytic {:.9e} numeric {:.9e} rel error {:.3e}",
            w.layer, w.kind, w.index, w.analytic, w.numeric, w.rel_error
        );
    }
    println!("max relative error {:.3e}", report.max_rel_error);
    if !report.passes(GRADCHECK_TOLERANCE) {
        bail!(
            "gradient check failed: max relative error {:.3e} exceeds {GRADCHECK_TOLERANCE:e}",
            report.max_rel_error
        );
    }
    Ok(())
}

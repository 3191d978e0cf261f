use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use swat_core::analysis::{
    attention_heatmaps, cost_model, density_check_model, density_check_scores, evt_sim, fit_linear,
    heatmap_csv, measure_delta, model_gradcheck, primitive_gradchecks, sink_report, sparsity_demo,
    timing_sweep, DensityReport, NamedCheck, DENSITY_THRESHOLDS,
};
use swat_core::attention::{Activation, SlopeMode};
use swat_core::data::{make_batches, synth::synthetic_text, Corpus};
use swat_core::eval::{self as core_eval, compare_training_regimes, EvalPlan, Regime, RegimeRun};
use swat_core::model::{
    build_model, load_checkpoint_expecting, model_to_bytes_with, Model, ModelConfig, PosMode,
};
use swat_core::train::{train_with, StepRecord, TrainLog};

use crate::config::{self, ExperimentConfig, PRESETS};
use crate::error::CliError;
use crate::output::{output_root, sha256_hex, RunDir};
use crate::{BenchCommand, ConfigArgs, DemoCommand};

fn open_run(cfg: &ExperimentConfig, out: Option<&Path>, command: &str) -> Result<RunDir, CliError> {
    let root = output_root(out.or(cfg.output_dir.as_deref()));
    RunDir::create(
        &root,
        command,
        &cfg.name,
        cfg.seed,
        serde_json::to_value(cfg)?,
    )
}

/// Run directory for commands driven by flags rather than a config file; the
/// flags themselves are the recorded config.
fn open_adhoc_run(
    out: Option<&Path>,
    command: &str,
    name: &str,
    seed: u64,
    args: Value,
) -> Result<RunDir, CliError> {
    let mut config = json!({ "name": name });
    config["args"] = args;
    RunDir::create(&output_root(out), command, name, seed, config)
}

fn checkpoint_bytes(model: &Model<f32>, cfg: &ExperimentConfig) -> Result<Vec<u8>, CliError> {
    Ok(model_to_bytes_with(
        model,
        Some(serde_json::to_value(cfg)?),
    )?)
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_hash: String,
    corpus_hash: String,
    corpus: swat_core::data::CorpusManifest,
    seed: u64,
    steps: usize,
    final_loss: Option<f64>,
    /// Hashes of outputs; the train log is hashed without wall-clock timing.
    outputs: &'a std::collections::BTreeMap<String, String>,
    content_hash: String,
}

/// Trains one model; returns it with its log. Partial logs are written on
/// numeric abort.
fn train_model(
    cfg: &ExperimentConfig,
    model_cfg: &ModelConfig,
    batch: swat_core::data::BatchSpec,
    corpus: &Corpus,
    run: &mut RunDir,
    prefix: &str,
    checkpoint_every: Option<usize>,
) -> Result<(Model<f32>, TrainLog), CliError> {
    let model = build_model::<f32>(model_cfg)?;
    let mut batches = make_batches(corpus, batch, cfg.seed)?;
    let mut seen: Vec<StepRecord> = Vec::new();
    let total = cfg.train.steps;
    let mut snapshots: Vec<(usize, Vec<u8>)> = Vec::new();
    let result = train_with(model, &mut batches, &cfg.train, |m, rec| {
        seen.push(rec.clone());
        if rec.step % 50 == 0 || rec.step + 1 == total {
            eprintln!(
                "{prefix}step {:>6}/{total} loss {:.4} lr {:.2e} |g| {:.3}",
                rec.step, rec.loss, rec.lr, rec.grad_norm
            );
        }
        if let Some(k) = checkpoint_every {
            if k > 0 && (rec.step + 1) % k == 0 && rec.step + 1 < total {
                let bytes = model_to_bytes_with(m, None)?;
                snapshots.push((rec.step + 1, bytes));
            }
        }
        Ok(())
    });
    for (step, bytes) in snapshots {
        run.write_bytes(&format!("{prefix}checkpoint_step{step}.bin"), &bytes, false)?;
    }
    match result {
        Ok((model, log)) => Ok((model, log)),
        Err(e) => {
            let partial = TrainLog { records: seen };
            run.write_csv(
                &format!("{prefix}train_log.partial.csv"),
                &partial.to_csv_bytes()?,
            )?;
            run.write_json(
                &format!("{prefix}abort.json"),
                &json!({ "error": e.to_string() }),
            )?;
            Err(e.into())
        }
    }
}

fn write_log(run: &mut RunDir, prefix: &str, log: &TrainLog) -> Result<(), CliError> {
    let csv_name = format!("{prefix}train_log.csv");
    let json_name = format!("{prefix}train_log.json");
    run.write_csv(&csv_name, &log.to_csv_bytes()?)?;
    run.write_json(&json_name, log)?;
    // Wall-clock columns vary run to run; the manifest hashes the rest.
    let stable = log.without_timing();
    let mut scratch = serde_json::to_vec(&stable)?;
    scratch.extend_from_slice(&stable.to_csv_bytes()?);
    let h = sha256_hex(&scratch);
    run.record_hash(&csv_name, &h);
    run.record_hash(&json_name, &h);
    Ok(())
}

pub fn train(
    args: &ConfigArgs,
    out: Option<&Path>,
    checkpoint_every: Option<usize>,
) -> Result<(), CliError> {
    let cfg = args.load()?;
    // Load data before creating any output so failures leave nothing behind.
    let corpus = cfg.load_corpus()?;
    make_batches(&corpus, cfg.data.batch, cfg.seed)?;
    let mut run = open_run(&cfg, out, "train")?;
    let (model, log) = train_model(
        &cfg,
        &cfg.model,
        cfg.data.batch,
        &corpus,
        &mut run,
        "",
        checkpoint_every,
    )?;
    run.write_bytes("checkpoint.bin", &checkpoint_bytes(&model, &cfg)?, true)?;
    write_log(&mut run, "", &log)?;
    run.write_json("config.json", &cfg)?;

    let manifest = Manifest {
        config_hash: cfg.hash(),
        corpus_hash: corpus.sha256(),
        corpus: corpus.manifest(),
        seed: cfg.seed,
        steps: cfg.train.steps,
        final_loss: log.records.last().map(|r| r.loss),
        outputs: run.hashes(),
        content_hash: run.content_hash(),
    };
    let manifest = serde_json::to_value(&manifest)?;
    run.write_json("manifest.json", &manifest)?;

    let mut s = String::new();
    let _ = writeln!(s, "parameters: {}", model.param_count());
    let _ = writeln!(
        s,
        "tokens per step: {}, steps: {}",
        cfg.data.batch.tokens_per_batch(),
        cfg.train.steps
    );
    if let (Some(first), Some(last)) = (log.records.first(), log.records.last()) {
        let _ = writeln!(s, "loss: {:.4} -> {:.4}", first.loss, last.loss);
    }
    let _ = writeln!(
        s,
        "content hash: {}",
        manifest["content_hash"].as_str().unwrap_or("")
    );
    run.write_summary(&s)
}

fn load_model(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<Model<f32>, CliError> {
    if !checkpoint.exists() {
        return Err(CliError::validation(format!(
            "checkpoint {} does not exist",
            checkpoint.display()
        )));
    }
    Ok(load_checkpoint_expecting::<f32>(checkpoint, &cfg.model)?)
}

pub fn eval_grid(args: &ConfigArgs, out: Option<&Path>, checkpoint: &Path) -> Result<(), CliError> {
    let cfg = args.load()?;
    let model = load_model(&cfg, checkpoint)?;
    let corpus = cfg.load_corpus()?;
    let tokens = corpus.split_tokens(cfg.eval.split);
    let mut run = open_run(&cfg, out, "eval-grid")?;
    let grid = core_eval::eval_grid(
        &model,
        &tokens,
        &cfg.eval.windows,
        &cfg.eval.lengths,
        cfg.eval.max_examples,
        cfg.eval.mode,
    )?;
    run.write_json("grid.json", &grid)?;
    run.write_csv("grid.csv", grid.to_csv().as_bytes())?;

    let mut s =
        String::from("perplexity by evaluation length (rows) and window (columns)\n\n| length |");
    for w in &grid.windows {
        let _ = write!(s, " ω={w} |");
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(grid.windows.len()));
    s.push('\n');
    for (i, l) in grid.lengths.iter().enumerate() {
        let _ = write!(s, "| {l} |");
        for cell in &grid.ppl[i] {
            match cell {
                Some(p) => {
                    let _ = write!(s, " {p:.3} |");
                }
                None => s.push_str(" - |"),
            }
        }
        s.push('\n');
    }
    run.write_summary(&s)
}

pub fn compare_regimes(args: &ConfigArgs, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = args.load()?;
    if cfg.regimes.len() < 2 {
        return Err(CliError::validation(
            "at `regimes`: need at least two regimes to compare",
        ));
    }
    let corpus = cfg.load_corpus()?;
    let budget = |r: &config::RegimeSpec| cfg.train.steps * cfg.regime_batch(r).tokens_per_batch();
    for r in &cfg.regimes {
        make_batches(&corpus, cfg.regime_batch(r), cfg.seed)?;
        if budget(r) != budget(&cfg.regimes[0]) {
            let e = swat_core::Error::Protocol(format!(
                "regime {} sees {} tokens but {} sees {}; make batch_size_tokens a multiple of every train_length",
                r.name,
                budget(r),
                cfg.regimes[0].name,
                budget(&cfg.regimes[0])
            ));
            return Err(e.into());
        }
    }
    let mut run = open_run(&cfg, out, "compare-regimes")?;
    let mut trained = Vec::new();
    for r in &cfg.regimes {
        let batch = cfg.regime_batch(r);
        let mut model_cfg = cfg.model.clone();
        model_cfg.window = batch.train_window;
        let prefix = format!("{}/", r.name);
        let (model, log) = train_model(&cfg, &model_cfg, batch, &corpus, &mut run, &prefix, None)?;
        run.write_bytes(
            &format!("{prefix}checkpoint.bin"),
            &checkpoint_bytes(&model, &cfg)?,
            true,
        )?;
        write_log(&mut run, &prefix, &log)?;
        let regime = Regime {
            train_window: batch.train_window,
            train_length: batch.train_length,
            token_budget: cfg.train.steps * batch.tokens_per_batch(),
        };
        trained.push((r.name.clone(), regime, model));
    }
    let runs: Vec<RegimeRun<'_, f32>> = trained
        .iter()
        .map(|(name, regime, model)| RegimeRun {
            name: name.clone(),
            regime: *regime,
            model,
        })
        .collect();
    let plan = EvalPlan {
        lengths: cfg.eval.lengths.clone(),
        eval_window: None,
        max_examples: cfg.eval.max_examples,
        mode: cfg.eval.mode,
    };
    let tokens = corpus.split_tokens(cfg.eval.split);
    let report = compare_training_regimes(&runs, &tokens, &plan)?;
    run.write_json("report.json", &report)?;
    let md = report.to_markdown();
    run.write_bytes("report.md", md.as_bytes(), true)?;
    run.write_summary(&format!(
        "token budget per regime: {}\n\nperplexity by evaluation length (best per column in bold)\n\n{md}",
        report.token_budget
    ))
}

pub fn diagnose(
    args: &ConfigArgs,
    out: Option<&Path>,
    checkpoint: &Path,
    seq_len: Option<usize>,
    sequences: usize,
) -> Result<(), CliError> {
    let cfg = args.load()?;
    let model = load_model(&cfg, checkpoint)?;
    let n = seq_len.unwrap_or(cfg.model.window);
    if sequences == 0 {
        return Err(CliError::validation("--sequences must be positive"));
    }
    let corpus = cfg.load_corpus()?;
    let tokens = corpus.split_tokens(cfg.eval.split);
    let seqs: Vec<&[usize]> = tokens.chunks_exact(n).take(sequences).collect();
    if seqs.is_empty() {
        return Err(CliError::validation(format!(
            "the {:?} split has {} tokens, fewer than one sequence of {n}",
            cfg.eval.split,
            tokens.len()
        )));
    }
    let mut run = open_run(&cfg, out, "diagnose")?;
    let sink = sink_report(&model, &seqs)?;
    run.write_json("sink.json", &sink)?;
    let maps = attention_heatmaps(&model, seqs[0])?;
    for (l, heads) in maps.iter().enumerate() {
        for (h, m) in heads.iter().enumerate() {
            run.write_csv(
                &format!("heatmaps/layer{l}_head{h}.csv"),
                heatmap_csv(m).as_bytes(),
            )?;
        }
    }
    let density = if cfg.model.activation == Activation::Sigmoid {
        let d = density_check_model(&model, seqs[0])?;
        run.write_json("density.json", &d)?;
        Some(d)
    } else {
        None
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        "first-token share at query row {} over {} sequences of {} tokens (uniform {:.4}, 2x uniform {:.4})\n",
        sink.query_row,
        sink.sequences,
        sink.seq_len,
        sink.uniform_share,
        2.0 * sink.uniform_share
    );
    s.push_str("| layer | share | ±se | raw mass | share/uniform | var(token 0) | var(others) | entropy |\n");
    s.push_str("|---|---|---|---|---|---|---|---|\n");
    for l in &sink.layers {
        let _ = writeln!(
            s,
            "| {} | {:.4} | {:.4} | {:.4} | {:.2} | {:.4} | {:.4} | {:.3} |",
            l.layer,
            l.first_token_share,
            l.share_std_error,
            l.first_token_raw_mass,
            l.share_over_uniform,
            l.token0_variance,
            l.other_variance,
            l.entropy
        );
    }
    if let Some(d) = density {
        s.push('\n');
        s.push_str(&density_table(&d));
    }
    run.write_summary(&s)
}

fn density_table(d: &DensityReport) -> String {
    let mut s = String::from(
        "| threshold | mean support softmax | mean support sigmoid |\n|---|---|---|\n",
    );
    for (i, t) in DENSITY_THRESHOLDS.iter().enumerate() {
        let _ = writeln!(
            s,
            "| {t} | {:.2} | {:.2} |",
            d.mean_support_softmax[i], d.mean_support_sigmoid[i]
        );
    }
    let _ = writeln!(
        s,
        "\nsigmoid support wider than softmax on {:.1}% of rows",
        100.0 * d.sigmoid_wider_fraction
    );
    s
}

fn fmt_vec(xs: &[f64], digits: usize) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.digits$}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn demo(cmd: DemoCommand, out: Option<&Path>) -> Result<(), CliError> {
    match cmd {
        DemoCommand::Sparsity { scores } => {
            let d = sparsity_demo(&scores)?;
            let mut run = open_adhoc_run(
                out,
                "demo-sparsity",
                "sparsity",
                0,
                json!({ "scores": scores }),
            )?;
            run.write_json("sparsity.json", &d)?;
            let mut s = String::new();
            let _ = writeln!(s, "scores  {}", fmt_vec(&d.scores, 2));
            let _ = writeln!(s, "softmax {}", fmt_vec(&d.weights, 2));
            let _ = writeln!(s, "exact   {}", fmt_vec(&d.weights, 6));
            let _ = writeln!(s, "\nratio law a_i/a_1 = exp(E_i - E_1)");
            let _ = writeln!(s, "ratios     {}", fmt_vec(&d.ratios, 6));
            let _ = writeln!(s, "exp(diffs) {}", fmt_vec(&d.exp_differences, 6));
            let _ = writeln!(
                s,
                "max |difference| {:.3e} ({})",
                d.max_identity_error,
                if d.identity_holds {
                    "holds"
                } else {
                    "VIOLATED"
                }
            );
            run.write_summary(&s)
        }
        DemoCommand::Evt {
            lengths,
            mu,
            sigma,
            trials,
            seed,
        } => {
            let samples = lengths
                .iter()
                .map(|&l| evt_sim(l, mu, sigma, trials, seed))
                .collect::<Result<Vec<_>, _>>()?;
            let args = json!({ "lengths": lengths, "mu": mu, "sigma": sigma, "trials": trials, "seed": seed });
            let mut run = open_adhoc_run(out, "demo-evt", "evt", seed, args)?;
            run.write_json("evt.json", &samples)?;
            let mut s = String::from(
                "| L | mean max | ±se | mu + sigma·sqrt(2 ln L) | ratio |\n|---|---|---|---|---|\n",
            );
            for e in &samples {
                let _ = writeln!(
                    s,
                    "| {} | {:.4} | {:.4} | {:.4} | {:.4} |",
                    e.l, e.empirical_mean_max, e.std_error, e.predicted, e.ratio
                );
            }
            run.write_summary(&s)
        }
        DemoCommand::Density { scores } => {
            let d = density_check_scores(&scores)?;
            let mut run = open_adhoc_run(
                out,
                "demo-density",
                "density",
                0,
                json!({ "scores": scores }),
            )?;
            run.write_json("density.json", &d)?;
            run.write_summary(&format!(
                "scores {}\n\n{}",
                fmt_vec(&scores, 2),
                density_table(&d)
            ))
        }
    }
}

pub fn gradcheck(args: &ConfigArgs, out: Option<&Path>, seeds: u64) -> Result<(), CliError> {
    let cfg = args.load()?;
    if seeds == 0 {
        return Err(CliError::validation("--seeds must be positive"));
    }
    let mut checks: Vec<NamedCheck> = Vec::new();
    for s in cfg.seed..cfg.seed + seeds {
        checks.extend(primitive_gradchecks(s)?);
        checks.push(model_gradcheck(&cfg.model, s, None)?);
    }
    let mut run = open_run(&cfg, out, "gradcheck")?;
    run.write_json("gradcheck.json", &checks)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    let mut s = String::from(
        "| check | seed | max rel err | tol | coords | result |\n|---|---|---|---|---|---|\n",
    );
    for c in &checks {
        let _ = writeln!(
            s,
            "| {} | {} | {:.2e} | {:.0e} | {} | {} |",
            c.name,
            c.seed,
            c.max_rel_err,
            c.tol,
            c.coords_checked,
            if c.passed { "pass" } else { "FAIL" }
        );
    }
    let _ = writeln!(
        s,
        "\n{} of {} checks passed",
        checks.len() - failed,
        checks.len()
    );
    run.write_summary(&s)?;
    if failed > 0 {
        return Err(CliError::numeric(format!(
            "{failed} gradient checks failed"
        )));
    }
    Ok(())
}

/// Model timed by `bench cost` when no config is given.
fn default_bench_model(window: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: 256,
        d_model: 128,
        n_heads: 4,
        n_layers: 2,
        window,
        activation: Activation::Sigmoid,
        pos_mode: PosMode::Alirope,
        slope_mode: SlopeMode::Balanced,
        rope_theta: 10_000.0,
        mlp_ratio: 4.0,
        seed: 0,
        norm_eps: 1e-5,
        sigmoid_window_scale: false,
    }
}

pub fn bench(cmd: BenchCommand, out: Option<&Path>) -> Result<(), CliError> {
    let BenchCommand::Cost {
        cfg,
        n,
        window,
        delta,
        sweep,
        lengths,
        reps,
    } = cmd;
    let model_cfg = if cfg.is_given() {
        let mut c = cfg.load()?.model;
        c.window = window;
        c
    } else {
        default_bench_model(window)
    };
    model_cfg.validate()?;
    cost_model(n, window, delta.unwrap_or(0.0))?;
    let measured = match delta {
        Some(_) => None,
        None => Some(measure_delta(
            n,
            window,
            model_cfg.n_heads,
            model_cfg.head_dim(),
            7,
            model_cfg.seed,
        )?),
    };
    let d = delta.unwrap_or_else(|| measured.as_ref().map_or(0.0, |m| m.delta.max(0.0)));
    let model = build_model::<f32>(&model_cfg)?;
    let estimate = cost_model(n, window, d)?.measure(&model, reps)?;
    let (points, fit) = if sweep {
        let pts = timing_sweep(&model, &lengths, window, reps)?;
        let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p.n as f64, p.seconds)).collect();
        let f = fit_linear(&xy)?;
        (Some(pts), Some(f))
    } else {
        (None, None)
    };

    let args = json!({ "model": model_cfg, "n": n, "window": window, "delta": delta, "sweep": sweep,
                       "lengths": lengths, "reps": reps });
    let mut run = open_adhoc_run(out, "bench-cost", "cost", model_cfg.seed, args)?;
    let result =
        json!({ "estimate": estimate, "delta_measurement": measured, "sweep": points, "fit": fit });
    run.write_json("cost.json", &result)?;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "N = {n}, ω = {window}, δ = {d:.4}{}",
        if measured.is_some() {
            " (measured)"
        } else {
            " (given)"
        }
    );
    let _ = writeln!(
        s,
        "predicted windowed cost N·ω·(1+δ) = {:.4e}",
        estimate.predicted_cost
    );
    let _ = writeln!(
        s,
        "full causal cost N(N+1)/2 = {:.4e}",
        estimate.full_attention_cost
    );
    if let (Some(f), Some(w)) = (
        estimate.measured_full_us_per_token,
        estimate.measured_windowed_us_per_token,
    ) {
        let _ = writeln!(s, "measured µs/token: full {f:.1}, windowed {w:.1}");
    }
    if let (Some(pts), Some(f)) = (points, fit) {
        s.push_str("\n| N | seconds | µs/token |\n|---|---|---|\n");
        for p in pts {
            let _ = writeln!(s, "| {} | {:.4} | {:.2} |", p.n, p.seconds, p.us_per_token);
        }
        let _ = writeln!(
            s,
            "\nlinear fit: seconds = {:.4e}·N + {:.4e}, R² = {:.5}",
            f.slope, f.intercept, f.r2
        );
    }
    run.write_summary(&s)
}

pub fn gen_corpus(bytes: usize, seed: u64, path: &Path) -> Result<(), CliError> {
    if bytes == 0 {
        return Err(CliError::validation("--bytes must be positive"));
    }
    let text = synthetic_text(bytes, seed);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, &text)
        .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))?;
    println!(
        "wrote {} bytes (seed {seed}) to {}, sha256 {}",
        text.len(),
        path.display(),
        sha256_hex(text.as_bytes())
    );
    Ok(())
}

pub fn presets(show: Option<&str>) -> Result<(), CliError> {
    match show {
        Some(name) => {
            let p = config::preset(name)?;
            println!("{}", p.json.trim_end());
        }
        None => {
            for p in PRESETS {
                let v: Value =
                    serde_json::from_str(p.json).expect("shipped presets are valid JSON");
                println!("{:<32} {}", p.name, v["description"].as_str().unwrap_or(""));
            }
        }
    }
    Ok(())
}

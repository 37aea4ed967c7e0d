use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use hiernet_core::datagen::SupportMode;
use hiernet_core::evaluation::{default_lambda_grid, CvOptions};
use hiernet_core::io::{
    fmt_f64, read_dataset, unix_now, write_cv, write_dataset, write_model, write_trace, CvSettings,
    FileDigest,
};
use hiernet_core::prox::{
    project_epi_l1, project_epi_l1_pos, project_epi_linf, project_linf_ball, project_orthant,
    prox_l1, EpiPoint,
};
use hiernet_core::{
    cross_validate, generate as generate_data, solve, CvSource, DataGenConfig, Dataset, Hierarchy,
    ModelParams, Norm, RegConfig, Role, RunManifest, SolverConfig,
};
use ndarray::Array1;

use crate::{
    BenchArgs, CvArgs, DataGenArgs, FitArgs, GenerateArgs, Preset, ProjectArgs, ProjectionKind,
};

const MANIFEST: &str = "manifest.json";

fn preset_name(p: Preset) -> &'static str {
    match p {
        Preset::Dataset30 => "dataset30",
        Preset::Dataset100 => "dataset100",
    }
}

fn preset_config(p: Preset, seed: u64) -> DataGenConfig {
    DataGenConfig::preset(preset_name(p), seed).expect("every preset has a config")
}

fn datagen_config(a: &DataGenArgs) -> Result<DataGenConfig> {
    let mut cfg = match a.preset {
        Some(p) => preset_config(p, a.seed),
        None => DataGenConfig::new(0, 0, 0.0, a.seed),
    };
    if let Some(n) = a.features {
        cfg.n_features = n;
    }
    if let Some(k) = a.main {
        cfg.n_nonzero_main = k;
    }
    if let Some(r) = a.rho {
        cfg.interaction_ratio = r;
    }
    if let Some(l) = a.samples {
        cfg.n_samples_per_split = l;
    }
    if let Some(s) = a.snr_db {
        cfg.target_snr_db = s;
    }
    if a.random_support {
        cfg.support = SupportMode::Random;
    }
    if a.no_standardize {
        cfg.standardize_responses = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn manifest(command: &str, args: Vec<String>) -> RunManifest {
    let mut m = RunManifest::new(command);
    m.args = args;
    m
}

/// Stamps the finish time, hashes the outputs and writes the manifest to `path`.
fn finish(mut m: RunManifest, outputs: &[PathBuf], path: &Path) -> Result<()> {
    for p in outputs {
        m.outputs.push(FileDigest::of(p)?);
    }
    m.finished_unix = unix_now();
    m.write(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_split(path: &Path, role: Role) -> Result<Dataset> {
    read_dataset(path, role).with_context(|| format!("reading {}", path.display()))
}

pub fn generate(a: &GenerateArgs, args: Vec<String>) -> Result<()> {
    let cfg = datagen_config(&a.data)?;
    let mut m = manifest("generate", args);
    m.seed = Some(cfg.seed);
    m.datagen = Some(cfg.clone());

    let (truth, data) = generate_data(&cfg)?;
    fs::create_dir_all(&a.out)?;
    let mut outputs = Vec::new();
    for (name, split) in [
        ("train.csv", &data.train),
        ("validation.csv", &data.validation),
        ("test.csv", &data.test),
    ] {
        let p = a.out.join(name);
        write_dataset(split, &p)?;
        outputs.push(p);
    }
    let v = &truth.v_bar;
    let truth_model = ModelParams::new(
        v.mapv(|x| x.max(0.0)),
        v.mapv(|x| (-x).max(0.0)),
        truth.theta_bar.clone(),
    )?;
    let p = a.out.join("truth.json");
    write_model(&truth_model, &p)?;
    outputs.push(p);
    finish(m, &outputs, &a.out.join(MANIFEST))?;

    println!(
        "N={} mains={} interactions={} samples/split={}",
        cfg.n_features,
        cfg.n_nonzero_main,
        truth.n_upper_interactions(),
        cfg.n_samples_per_split
    );
    for (role, n) in ["train", "validation", "test"].iter().zip(&data.noise) {
        println!("{role}: snr {:.3} dB", n.snr_db);
    }
    Ok(())
}

pub fn fit(a: &FitArgs, args: Vec<String>) -> Result<()> {
    let data = read_split(&a.data, Role::Train)?;
    let reg = RegConfig::new(a.lambda, a.norm.into(), a.hierarchy.into())?;
    let cfg = SolverConfig::for_problem(&data, &reg)?
        .with_max_iters(a.max_iters)
        .with_tolerances(a.tol, a.tol)
        .with_seed(a.seed)
        .with_record_every(a.record_every);
    let mut m = manifest("fit", args);
    m.seed = Some(a.seed);
    m.reg = Some(reg);
    m.solver = Some(cfg);
    m.inputs.push(FileDigest::of(&a.data)?);

    let rep = solve(&data, &reg, &cfg)?;
    let (model, trace) = (a.out.join("model.json"), a.out.join("trace.csv"));
    write_model(&rep.params, &model)?;
    write_trace(&rep, &trace)?;
    finish(m, &[model, trace], &a.out.join(MANIFEST))?;
    println!(
        "{} lambda={}: objective {} after {} iterations ({})",
        reg.label(),
        fmt_f64(reg.lambda),
        fmt_f64(rep.final_objective()),
        rep.iterations,
        rep.termination
    );
    Ok(())
}

pub fn cv(a: &CvArgs, args: Vec<String>) -> Result<()> {
    let mut m = manifest("cv", args);
    let source = match (a.preset, &a.train, &a.validation, &a.test) {
        (Some(p), ..) => {
            let cfg = preset_config(p, a.seed);
            m.seed = Some(a.seed);
            m.datagen = Some(cfg.clone());
            CvSource::Generated(cfg)
        }
        (None, Some(tr), Some(va), Some(te)) => {
            for p in [tr, va, te] {
                m.inputs.push(FileDigest::of(p)?);
            }
            CvSource::Fixed {
                train: read_split(tr, Role::Train)?,
                validation: read_split(va, Role::Validation)?,
                test: read_split(te, Role::Test)?,
            }
        }
        _ => bail!("cv needs --preset or all of --train, --validation, --test"),
    };
    let defaults = CvOptions::default();
    let opts = CvOptions {
        max_iters: a.max_iters.unwrap_or(defaults.max_iters),
        tol_objective: a.tol_objective.unwrap_or(defaults.tol_objective),
        tol_iterate: a.tol_iterate.unwrap_or(defaults.tol_iterate),
        threads: a.threads,
    };
    let grid = a.lambda_grid.clone().unwrap_or_else(default_lambda_grid);
    m.cv = Some(CvSettings {
        lambda_grid: grid.clone(),
        n_seeds: a.seeds,
        options: opts,
    });

    let norm: Norm = a.norm.into();
    let hierarchy: Hierarchy = a.hierarchy.into();
    let res = cross_validate(&source, norm, hierarchy, &grid, a.seeds, &opts)?;
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    let out = a.out.join("cv.csv");
    write_cv(&res, &out)?;
    finish(m, &[out], &a.out.join(MANIFEST))?;
    let best = res.best();
    println!(
        "{}: best lambda {} val {:.4} +/- {:.4} test {:.4} +/- {:.4} over {} replicates",
        res.label(),
        fmt_f64(res.best_lambda),
        best.val_mse.mean,
        best.val_mse.std,
        best.test_mse.mean,
        best.test_mse.std,
        res.n_seeds
    );
    Ok(())
}

fn read_numbers(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            let v: f64 = t
                .parse()
                .with_context(|| format!("{}: cannot parse {t:?}", path.display()))?;
            if !v.is_finite() {
                bail!("{}: non-finite value {t:?}", path.display());
            }
            Ok(v)
        })
        .collect()
}

fn epi_point(values: &[f64]) -> Result<EpiPoint> {
    if values.len() < 3 {
        bail!("epigraph projections need w+, w- and at least one u entry");
    }
    Ok(EpiPoint::new(
        values[0],
        values[1],
        Array1::from(values[2..].to_vec()),
    ))
}

fn flatten(p: EpiPoint) -> Vec<f64> {
    [p.omega_plus, p.omega_minus]
        .into_iter()
        .chain(p.u)
        .collect()
}

pub fn project(a: &ProjectArgs, args: Vec<String>) -> Result<()> {
    let values = read_numbers(&a.input)?;
    let param = || {
        a.param
            .with_context(|| format!("--param is required for {:?}", a.kind))
    };
    let x = Array1::from(values.clone());
    let result: Vec<f64> = match a.kind {
        ProjectionKind::EpiL1 => flatten(project_epi_l1(&epi_point(&values)?)),
        ProjectionKind::EpiLinf => flatten(project_epi_linf(&epi_point(&values)?)),
        ProjectionKind::EpiL1Pos => flatten(project_epi_l1_pos(&epi_point(&values)?)?),
        ProjectionKind::Orthant => project_orthant(&x).to_vec(),
        ProjectionKind::L1Prox => prox_l1(&x, param()?)?.to_vec(),
        ProjectionKind::LinfBall => project_linf_ball(&x, param()?).to_vec(),
    };
    let text: String = result.iter().map(|v| fmt_f64(*v) + "\n").collect();
    match &a.out {
        Some(out) => {
            let mut m = manifest("project", args);
            m.inputs.push(FileDigest::of(&a.input)?);
            fs::write(out, text)?;
            finish(m, std::slice::from_ref(out), &sidecar(out))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

/// `<file>.manifest.json` next to a single output file.
fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

pub fn bench(a: &BenchArgs, args: Vec<String>) -> Result<()> {
    if a.iters == 0 || a.samples == 0 {
        bail!("--iters and --samples must be positive");
    }
    let mut table = String::from("n_features,n_samples,mode,iterations,seconds,us_per_iter\n");
    if a.out.is_none() {
        print!("{table}");
    }
    for &n in &a.sizes {
        let mut cfg = DataGenConfig::new(n, (n * 3 / 10).max(2).min(n), 0.01, a.seed);
        cfg.n_samples_per_split = a.samples;
        let (_, data) = generate_data(&cfg)?;
        for (norm, h) in [
            (Norm::L1, Hierarchy::Weak),
            (Norm::Linf, Hierarchy::Weak),
            (Norm::L1, Hierarchy::Strong),
            (Norm::Linf, Hierarchy::Strong),
        ] {
            let reg = RegConfig::new(8.0, norm, h)?;
            let scfg = SolverConfig::for_problem(&data.train, &reg)?
                .with_max_iters(a.iters)
                .with_tolerances(0.0, 0.0)
                .with_record_every(a.iters);
            let start = Instant::now();
            let rep = solve(&data.train, &reg, &scfg)?;
            let t = start.elapsed().as_secs_f64();
            let line = format!(
                "{n},{},{},{},{t:.6},{:.3}\n",
                a.samples,
                reg.label(),
                rep.iterations,
                1e6 * t / rep.iterations as f64
            );
            if a.out.is_none() {
                print!("{line}");
                std::io::stdout().flush()?;
            }
            table.push_str(&line);
        }
    }
    if let Some(out) = &a.out {
        let mut m = manifest("bench", args);
        m.seed = Some(a.seed);
        fs::write(out, &table)?;
        finish(m, std::slice::from_ref(out), &sidecar(out))?;
    }
    Ok(())
}

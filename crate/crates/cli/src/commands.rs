use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spherefield::equivalence::{classify_models, functional_series, EquivalenceReport, Verdict, VerdictPolicy};
use spherefield::harmonics::{SphereDim, SpherePoint};
use spherefield::models::{
    multiquadratic_kernel_closed_form, multiquadratic_validity, ModelSpec, MultiquadraticValidity, DEFAULT_L_MAX,
};
use spherefield::rng::RngSeed;
use spherefield::schoenberg::{validate_sequence, SequenceFile, ValidityReport, Variant};
use spherefield::simulate::{
    default_pairs, monte_carlo_kernel_check, rotate_towards_pole, FieldSynthesizer, McCheckOptions, SampleGrid,
};
use spherefield::{IsotropicKernel, SchoenbergSequence};

use crate::config::{load_config, ModelBlock, RunConfig};
use crate::{
    CliError, Command, Format, PolicyArgs, Truncation, EXIT_DISAGREEMENT, EXIT_INCONCLUSIVE, EXIT_INVALID,
    EXIT_NEGATIVE, EXIT_OK, OUT_DIR_ENV,
};

type CmdResult = Result<i32, CliError>;

pub const MC_DEFAULT_SAMPLES: usize = 5000;
pub const MC_DEFAULT_L_MAX: usize = 30;
pub const MC_DEFAULT_K_MAX: usize = 30;
pub const SAMPLE_DEFAULT_L_MAX: usize = 30;

pub fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Validate { config, trunc, out } => cmd_validate(&config, &trunc, out.as_deref()),
        Command::Kernel { config, thetas, trunc, format, out } => {
            cmd_kernel(&config, thetas, &trunc, format, out.as_deref())
        }
        Command::Sample { config, manifest, grid, n_samples, seed, stream, trunc, format, out } => {
            let out_dir = out.unwrap_or_else(default_out_dir);
            match manifest {
                Some(m) => cmd_sample_rerun(&m, &out_dir),
                None => {
                    let cfg = load_config(config.as_deref().expect("clap requires config"))?;
                    let plan = SamplePlan::from_args(&cfg, grid, n_samples, seed, stream, &trunc, format)?;
                    let manifest = cmd_sample(&plan, &out_dir)?;
                    eprintln!("wrote {} samples and manifest.json to {}", manifest.outputs.len(), out_dir.display());
                    Ok(EXIT_OK)
                }
            }
        }
        Command::Equiv { config, trunc, policy, format, out, terms_csv } => {
            cmd_equiv(&config, &trunc, &policy, format, out.as_deref(), terms_csv.as_deref())
        }
        Command::McCheck { config, analytic_config, n_samples, pairs, thetas, seed, stream, z, trunc, out } => {
            let args = McArgs { analytic_config, n_samples, pairs, thetas, seed, stream, z };
            cmd_mc_check(&config, &args, &trunc, out.as_deref())
        }
        Command::SchoenbergExport { config, trunc, format, out } => cmd_export(&config, &trunc, format, out.as_deref()),
    }
}

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("spherefield-out"))
}

fn emit(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, content)?;
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable report");
    s.push('\n');
    s
}

fn l_max_of(trunc: &Truncation, cfg: &RunConfig, default: usize) -> usize {
    trunc.l_max.or(cfg.run.l_max).unwrap_or(default)
}

fn k_max_of(trunc: &Truncation, cfg: &RunConfig) -> Option<usize> {
    trunc.k_max.or(cfg.run.k_max)
}

/// Column suffixes for the entries of a kernel value or coefficient.
pub fn entry_names(variant: Variant, op_dim: usize) -> Vec<String> {
    match variant {
        Variant::Scalar => vec!["0".into()],
        Variant::Matrix => (0..op_dim).flat_map(|i| (0..op_dim).map(move |j| format!("{i}_{j}"))).collect(),
        Variant::FourierDiagonal => (0..op_dim).map(|k| format!("k{k}")).collect(),
    }
}

#[derive(Debug, Serialize)]
struct ValidationOutput {
    family: String,
    valid: bool,
    /// The violated condition, if any.
    violation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    multiquadratic: Option<MultiquadraticValidity>,
    sequence: Option<ValidityReport>,
}

pub fn cmd_validate(config: &Path, trunc: &Truncation, out: Option<&Path>) -> CmdResult {
    let cfg = load_config(config)?;
    let l_max = l_max_of(trunc, &cfg, DEFAULT_L_MAX);
    let k_max = k_max_of(trunc, &cfg);
    let spec = cfg.model.spec(l_max, k_max);
    let family = spec.map_or("sequence", |s| s.family()).to_string();
    let mq = match &spec {
        Some(ModelSpec::Multiquadratic(p)) => Some(multiquadratic_validity(p)),
        _ => None,
    };
    let model_check = spec.map(|s| s.validate()).transpose();
    let output = match model_check {
        Err(spherefield::Error::InvalidModel(msg)) => {
            ValidationOutput { family, valid: false, violation: Some(msg), multiquadratic: mq, sequence: None }
        }
        Err(e) => return Err(e.into()),
        Ok(_) => {
            let resolved = cfg.model.resolve(l_max, k_max)?;
            let report = validate_sequence(&resolved.sequence);
            ValidationOutput {
                family,
                valid: report.passed,
                violation: report.failures.first().cloned(),
                multiquadratic: mq,
                sequence: Some(report),
            }
        }
    };
    emit(out, &to_json(&output))?;
    match &output.violation {
        Some(v) if !output.valid => {
            eprintln!("invalid: {v}");
            Ok(EXIT_INVALID)
        }
        _ => {
            eprintln!("valid {} model", output.family);
            Ok(EXIT_OK)
        }
    }
}

#[derive(Debug, Serialize)]
struct KernelRow {
    theta: f64,
    entries: Vec<f64>,
    tail_bound: f64,
    tail_heuristic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form: Option<Vec<f64>>,
}

pub fn cmd_kernel(
    config: &Path,
    thetas: Option<Vec<f64>>,
    trunc: &Truncation,
    format: Format,
    out: Option<&Path>,
) -> CmdResult {
    let cfg = load_config(config)?;
    let thetas = thetas.or_else(|| cfg.run.thetas.clone()).unwrap_or_default();
    if thetas.is_empty() {
        return Err(CliError::Usage("no angles given (use --thetas)".into()));
    }
    if let Some(t) = thetas.iter().find(|t| !(0.0..=std::f64::consts::PI).contains(*t)) {
        return Err(CliError::Usage(format!("angle {t} outside [0, π]")));
    }
    let resolved = cfg.model.resolve(l_max_of(trunc, &cfg, DEFAULT_L_MAX), k_max_of(trunc, &cfg))?;
    let closed = match resolved.spec {
        Some(ModelSpec::Multiquadratic(p)) if p.d.get() == 3 => Some(p),
        _ => None,
    };
    let seq = resolved.sequence;
    let names = entry_names(seq.variant(), seq.op_dim());
    let kernel = IsotropicKernel::new(seq);
    let rows = thetas
        .iter()
        .map(|&theta| {
            let ev = kernel.eval(theta.cos())?;
            Ok(KernelRow {
                theta,
                entries: ev.value.entries(),
                tail_bound: ev.tail_bound,
                tail_heuristic: ev.tail_heuristic,
                closed_form: closed
                    .map(|p| multiquadratic_kernel_closed_form(&p, theta).value.transpose().as_slice().to_vec()),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let text = match format {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut header = vec!["theta".to_string()];
            header.extend(names.iter().map(|n| format!("r_{n}")));
            header.push("tail_bound".into());
            if closed.is_some() {
                header.extend(names.iter().map(|n| format!("closed_{n}")));
            }
            let mut s = header.join(",") + "\n";
            for r in &rows {
                let mut cells: Vec<String> =
                    std::iter::once(r.theta).chain(r.entries.iter().copied()).map(|v| format!("{v:e}")).collect();
                cells.push(format!("{:e}", r.tail_bound));
                if let Some(c) = &r.closed_form {
                    cells.extend(c.iter().map(|v| format!("{v:e}")));
                }
                s += &cells.join(",");
                s.push('\n');
            }
            s
        }
    };
    emit(out, &text)?;
    Ok(EXIT_OK)
}

pub fn cmd_export(config: &Path, trunc: &Truncation, format: Format, out: Option<&Path>) -> CmdResult {
    let cfg = load_config(config)?;
    let seq = cfg.model.resolve(l_max_of(trunc, &cfg, DEFAULT_L_MAX), k_max_of(trunc, &cfg))?.sequence;
    let text = match format {
        Format::Json => to_json(&SequenceFile::from(seq)),
        Format::Csv => {
            let names = entry_names(seq.variant(), seq.op_dim());
            let mut s = std::iter::once("l".to_string())
                .chain(names.iter().map(|n| format!("b_{n}")))
                .collect::<Vec<_>>()
                .join(",");
            s.push('\n');
            for (l, b) in seq.coeffs().iter().enumerate() {
                let m = b.to_dense();
                let entries: Vec<f64> = match b.variant() {
                    Variant::FourierDiagonal => m.diagonal().iter().copied().collect(),
                    _ => m.transpose().as_slice().to_vec(),
                };
                let cells: Vec<String> =
                    std::iter::once(l.to_string()).chain(entries.iter().map(|v| format!("{v:e}"))).collect();
                s += &cells.join(",");
                s.push('\n');
            }
            s
        }
    };
    emit(out, &text)?;
    Ok(EXIT_OK)
}

fn policy_of(args: &PolicyArgs, cfg: &RunConfig) -> VerdictPolicy {
    let d = VerdictPolicy::default();
    VerdictPolicy {
        margin: args.margin.or(cfg.run.policy.margin).unwrap_or(d.margin),
        eps: args.eps.or(cfg.run.policy.eps).unwrap_or(d.eps),
        floor: args.floor.or(cfg.run.policy.floor).unwrap_or(d.floor),
    }
}

pub fn cmd_equiv(
    configs: &[PathBuf],
    trunc: &Truncation,
    policy: &PolicyArgs,
    format: Format,
    out: Option<&Path>,
    terms_csv: Option<&Path>,
) -> CmdResult {
    if configs.len() != 2 {
        return Err(CliError::Usage(format!("equiv needs exactly two --config files, got {}", configs.len())));
    }
    let c1 = load_config(&configs[0])?;
    let c2 = load_config(&configs[1])?;
    let l_max = trunc.l_max.or(c1.run.l_max).unwrap_or(DEFAULT_L_MAX);
    let k_max = k_max_of(trunc, &c1);
    let m1 = c1.model.resolve(l_max, k_max)?;
    let m2 = c2.model.resolve(l_max, k_max.or(c2.run.k_max))?;
    m1.sequence.require_compatible(&m2.sequence).map_err(|e| CliError::Usage(e.to_string()))?;
    let l = m1.sequence.l_max().min(m2.sequence.l_max());
    for (i, m) in [&m1, &m2].into_iter().enumerate() {
        let rep = validate_sequence(&m.sequence.truncated(l));
        if !rep.strictly_positive {
            return Err(CliError::Invalid(format!(
                "model {}: {}",
                i + 1,
                rep.failures.first().cloned().unwrap_or_default()
            )));
        }
    }
    let closed = match (&m1.spec, &m2.spec) {
        (Some(a), Some(b)) => classify_models(a, b)?,
        _ => None,
    };
    let series = functional_series(&m1.sequence, &m2.sequence, l)?;
    let report = EquivalenceReport::new(series, policy_of(policy, &c1), closed);
    let text = match format {
        Format::Json => to_json(&report),
        Format::Csv => report.to_csv(),
    };
    emit(out, &text)?;
    if let Some(p) = terms_csv {
        emit(Some(p), &report.to_csv())?;
    }
    eprintln!("numeric: {:?} ({})", report.numeric.verdict, report.numeric.diagnostics);
    if let Some(c) = &report.closed_form {
        eprintln!("closed form: {:?} ({})", c.verdict, c.diagnostics);
    }
    if report.disagreement {
        eprintln!("closed-form and numeric verdicts disagree");
        return Ok(EXIT_DISAGREEMENT);
    }
    Ok(match report.verdict {
        Verdict::Equivalent => EXIT_OK,
        Verdict::Orthogonal => EXIT_NEGATIVE,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    })
}

pub struct McArgs {
    pub analytic_config: Option<PathBuf>,
    pub n_samples: Option<usize>,
    pub pairs: usize,
    pub thetas: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub stream: Option<u64>,
    pub z: Option<f64>,
}

fn pairs_at(d: SphereDim, thetas: &[f64]) -> Result<Vec<(SpherePoint, SpherePoint)>, CliError> {
    if !d.supports_synthesis() {
        // reuse the library's message
        default_pairs(d, 2)?;
    }
    Ok(match d.get() {
        1 => thetas.iter().map(|&t| (SpherePoint::on_circle(0.3), SpherePoint::on_circle(0.3 + t))).collect(),
        _ => {
            let x = SpherePoint::from_spherical(1.0, 0.4);
            thetas.iter().map(|&t| (x.clone(), rotate_towards_pole(&x, t))).collect()
        }
    })
}

pub fn cmd_mc_check(config: &Path, args: &McArgs, trunc: &Truncation, out: Option<&Path>) -> CmdResult {
    let cfg = load_config(config)?;
    let n = args.n_samples.or(cfg.run.n_samples).unwrap_or(MC_DEFAULT_SAMPLES);
    if n < 2 {
        return Err(CliError::Usage(format!("--n-samples must be at least 2, got {n}")));
    }
    let l_max = l_max_of(trunc, &cfg, MC_DEFAULT_L_MAX);
    let k_max = Some(k_max_of(trunc, &cfg).unwrap_or(MC_DEFAULT_K_MAX));
    let model = cfg.model.resolve(l_max, k_max)?;
    let analytic = match &args.analytic_config {
        Some(p) => Some(load_config(p)?.model.resolve(l_max, k_max)?.sequence),
        None => None,
    };
    let pairs = match &args.thetas {
        Some(t) if !t.is_empty() => pairs_at(model.dim(), t)?,
        Some(_) => return Err(CliError::Usage("empty --thetas".into())),
        None => default_pairs(model.dim(), args.pairs)?,
    };
    let seed = RngSeed::new(args.seed.or(cfg.run.seed).unwrap_or(0), args.stream.or(cfg.run.stream).unwrap_or(0));
    let opts =
        McCheckOptions { z_threshold: args.z.or(cfg.run.z_threshold).unwrap_or(4.0), l_max: Some(l_max), analytic };
    let report = monte_carlo_kernel_check(&model.sequence, &pairs, n, seed, &opts)?;
    emit(out, &to_json(&report))?;
    eprintln!(
        "max |z| = {:.3} over {} pairs ({} fields): {}",
        report.max_abs_z,
        report.pairs.len(),
        n,
        if report.passed { "pass" } else { "fail" }
    );
    Ok(if report.passed { EXIT_OK } else { EXIT_NEGATIVE })
}

/// Resolves a grid specification string.
pub fn parse_grid(spec: &str, d: SphereDim, base_dir: &Path) -> Result<SampleGrid, CliError> {
    let bad = || CliError::Usage(format!("bad grid specification {spec:?}"));
    let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
    let grid = match kind {
        "file" => {
            let p = base_dir.join(rest);
            let text =
                fs::read_to_string(&p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            let g: SampleGrid =
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            SampleGrid::new(g.dim(), g.points().to_vec())?
        }
        _ if !d.supports_synthesis() => {
            // surfaces the synthesis restriction
            SampleGrid::new(d, vec![])?
        }
        "equispaced" if d.get() == 1 => SampleGrid::equispaced_circle(num(rest)?)?,
        "equiangular" if d.get() == 2 => {
            let (a, b) = rest.split_once('x').ok_or_else(bad)?;
            SampleGrid::equiangular(num(a)?, num(b)?)?
        }
        "random" => {
            let (n, seed) = match rest.split_once(':') {
                Some((n, s)) => (num(n)?, s.parse::<u64>().map_err(|_| bad())?),
                None => (num(rest)?, 0),
            };
            SampleGrid::uniform_random(d, n, RngSeed::new(seed, u64::MAX))?
        }
        _ => return Err(bad()),
    };
    if grid.dim() != d {
        return Err(CliError::Usage(format!("grid on S^{} for a model on S^{}", grid.dim().get(), d.get())));
    }
    Ok(grid)
}

fn default_grid(d: SphereDim) -> String {
    match d.get() {
        1 => "equispaced:64".into(),
        _ => "equiangular:12x24".into(),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn model_hash(seq: &SchoenbergSequence) -> String {
    sha256_hex(serde_json::to_string(&SequenceFile::from(seq.clone())).expect("serializable").as_bytes())
}

/// Every input that affects `sample` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub model: ModelBlock,
    #[serde(rename = "L_max")]
    pub l_max: usize,
    #[serde(rename = "K_max")]
    pub k_max: Option<usize>,
    pub grid: String,
    /// Directory relative grid files and sequence paths are resolved against.
    pub base_dir: PathBuf,
    pub n_samples: usize,
    pub seed: u64,
    pub stream: u64,
    pub format: String,
}

impl SamplePlan {
    pub fn from_args(
        cfg: &RunConfig,
        grid: Option<String>,
        n_samples: Option<usize>,
        seed: Option<u64>,
        stream: Option<u64>,
        trunc: &Truncation,
        format: Format,
    ) -> Result<Self, CliError> {
        let d = cfg.model.dim()?;
        let n_samples = n_samples.or(cfg.run.n_samples).unwrap_or(1);
        if n_samples == 0 {
            return Err(CliError::Usage("--n-samples must be positive".into()));
        }
        Ok(SamplePlan {
            model: cfg.model.clone(),
            l_max: l_max_of(trunc, cfg, SAMPLE_DEFAULT_L_MAX),
            k_max: k_max_of(trunc, cfg),
            grid: grid.or_else(|| cfg.run.grid.clone()).unwrap_or_else(|| default_grid(d)),
            base_dir: cfg.base_dir.clone(),
            n_samples,
            seed: seed.or(cfg.run.seed).unwrap_or(0),
            stream: stream.or(cfg.run.stream).unwrap_or(0),
            format: match format {
                Format::Csv => "csv".into(),
                Format::Json => "json".into(),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputHash {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub plan: SamplePlan,
    pub model_hash: String,
    pub grid_hash: String,
    pub streams: Vec<u64>,
    pub outputs: Vec<OutputHash>,
}

/// Runs `plan`, writing sample files and `manifest.json` into `out_dir`.
pub fn cmd_sample(plan: &SamplePlan, out_dir: &Path) -> Result<SampleManifest, CliError> {
    let model = plan.model.resolve(plan.l_max, plan.k_max)?;
    let d = model.dim();
    if !d.supports_synthesis() {
        return Err(spherefield::Error::Unsupported(format!(
            "field synthesis is implemented for d in {{1, 2}} only; got d = {}",
            d.get()
        ))
        .into());
    }
    let grid = parse_grid(&plan.grid, d, &plan.base_dir)?;
    let grid_hash = sha256_hex(serde_json::to_string(&grid).expect("serializable").as_bytes());
    let synth = FieldSynthesizer::new(&model.sequence, grid, plan.l_max.min(model.sequence.l_max()))?;
    fs::create_dir_all(out_dir)?;
    let mut outputs = Vec::with_capacity(plan.n_samples);
    let mut streams = Vec::with_capacity(plan.n_samples);
    for i in 0..plan.n_samples {
        let seed = RngSeed::new(plan.seed, plan.stream + i as u64);
        let sample = synth.sample(seed);
        let (name, text) = match plan.format.as_str() {
            "json" => (format!("sample_{i:04}.json"), to_json(&sample)),
            _ => (format!("sample_{i:04}.csv"), sample.to_csv()),
        };
        fs::write(out_dir.join(&name), &text)?;
        outputs.push(OutputHash { file: name, sha256: sha256_hex(text.as_bytes()) });
        streams.push(seed.stream);
    }
    let manifest =
        SampleManifest { plan: plan.clone(), model_hash: model_hash(&model.sequence), grid_hash, streams, outputs };
    fs::write(out_dir.join("manifest.json"), to_json(&manifest))?;
    Ok(manifest)
}

/// Re-runs a manifest into `out_dir` and compares hashes.
pub fn cmd_sample_rerun(manifest_path: &Path, out_dir: &Path) -> CmdResult {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", manifest_path.display())))?;
    let old: SampleManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", manifest_path.display())))?;
    let new = cmd_sample(&old.plan, out_dir)?;
    let mut ok = true;
    if new.model_hash != old.model_hash {
        eprintln!("model hash differs: {} vs {}", new.model_hash, old.model_hash);
        ok = false;
    }
    for (a, b) in new.outputs.iter().zip(&old.outputs) {
        if a != b {
            eprintln!("{}: hash {} differs from recorded {}", a.file, a.sha256, b.sha256);
            ok = false;
        }
    }
    if ok {
        eprintln!("reproduced {} outputs with identical hashes", new.outputs.len());
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_NEGATIVE)
    }
}

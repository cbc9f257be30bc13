use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::Serialize;

use icu_mortality::config::RunConfig;
use icu_mortality::eval::{BiasAudit, Split};
use icu_mortality::features::{FeatureTable, Featurizer};
use icu_mortality::harmonize::{HarmonizeReport, HarmonizedStay};
use icu_mortality::ingest::{
    generate_synthetic_cohort, read_events, read_notes, read_statics, write_events, write_notes, write_statics,
    StayRecord,
};
use icu_mortality::manifest::{check_lineage, config_hash, external, sidecar, verify, Provenance, VerifiedInput};
use icu_mortality::pipeline::{
    self, audit, evaluate, render_report, Evaluation, ModelCheckpoint, Predictions, Variant, VERSION,
};
use icu_mortality::Error;

#[derive(Parser)]
#[command(name = "icu-mortality", version, about = "First-24h ICU mortality pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory; overrides the config file.
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    All,
    StaticOnly,
    TimevariantOnly,
    Combined,
}

impl VariantArg {
    fn variants(self) -> Vec<Variant> {
        match self {
            VariantArg::All => Variant::ALL.to_vec(),
            VariantArg::StaticOnly => vec![Variant::StaticOnly],
            VariantArg::TimevariantOnly => vec![Variant::TimevariantOnly],
            VariantArg::Combined => vec![Variant::Combined],
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort as raw events, statics and notes tables.
    Synth {
        #[arg(long)]
        n_stays: Option<usize>,
        #[arg(long)]
        mortality_rate: Option<f64>,
    },
    /// Assemble qualifying stays from the raw tables.
    Ingest {
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        statics: Option<PathBuf>,
        #[arg(long)]
        notes: Option<PathBuf>,
    },
    /// Map stays onto the canonical hourly grid.
    Harmonize,
    /// Impute, score and featurize every stay.
    Featurize {
        #[arg(long)]
        notes: Option<PathBuf>,
    },
    /// Stratified train/validation/test split.
    Split,
    /// Train model variants.
    Train {
        #[arg(long, value_enum, default_value = "all")]
        variant: VariantArg,
    },
    /// Score every stay with trained models.
    Predict {
        #[arg(long, value_enum, default_value = "all")]
        variant: VariantArg,
    },
    /// Test-set metrics, baselines, comparisons and breakdowns.
    Evaluate {
        #[arg(long, value_enum, default_value = "all")]
        variant: VariantArg,
    },
    /// Per-group error rates of the combined model.
    Audit {
        #[arg(long, value_enum, default_value = "combined")]
        variant: VariantArg,
    },
    /// Render the evaluation and audit as a table and a structured file.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Ingest { .. } => "ingest",
            Command::Harmonize => "harmonize",
            Command::Featurize { .. } => "featurize",
            Command::Split => "split",
            Command::Train { .. } => "train",
            Command::Predict { .. } => "predict",
            Command::Evaluate { .. } => "evaluate",
            Command::Audit { .. } => "audit",
            Command::Report => "report",
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    work: PathBuf,
    command: &'static str,
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => {
            let doc = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let mut value: toml::Table = toml::from_str(&doc).map_err(Error::from)?;
            if let Some(seed) = g.seed {
                value.insert("seed".into(), toml::Value::Integer(seed as i64));
            }
            RunConfig::parse(&toml::to_string(&value)?)?
        }
        None => match g.seed {
            Some(seed) => RunConfig::with_seed(seed),
            None => return Err(Error::Usage("a seed is required: pass --seed or set `seed` in --config".into()).into()),
        },
    };
    if let Some(w) = &g.work_dir {
        cfg.paths.work_dir = w.clone();
    }
    Ok(cfg)
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.work.join(name)
    }

    fn raw(&self, given: &Option<PathBuf>, configured: &Option<PathBuf>, default: &str) -> PathBuf {
        given
            .clone()
            .or_else(|| configured.clone())
            .unwrap_or_else(|| self.work.join("raw").join(default))
    }

    /// Hash of the configuration without paths, so artifacts do not depend on where they live.
    fn config_sha(&self) -> String {
        let mut c = self.cfg.clone();
        c.paths = Default::default();
        config_hash(&c)
    }

    fn provenance(&self, inputs: &[VerifiedInput]) -> Provenance {
        Provenance::new(self.command, VERSION, self.cfg.seed, self.config_sha(), inputs)
    }

    fn require(&self, path: &Path) -> Result<()> {
        if !path.exists() {
            return Err(Error::Usage(format!("input {} does not exist; run the upstream command first", path.display())).into());
        }
        Ok(())
    }

    /// Verify a set of manifested inputs and their mutual consistency.
    fn inputs(&self, items: &[(&str, PathBuf)]) -> Result<Vec<VerifiedInput>> {
        let mut out = Vec::new();
        for (name, p) in items {
            self.require(p)?;
            out.push(verify(name, p)?);
        }
        check_lineage(&out)?;
        Ok(out)
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })?)
}

fn json_bytes<T: Serialize>(v: &T, pretty: bool) -> Result<Vec<u8>> {
    let mut b = if pretty { serde_json::to_vec_pretty(v)? } else { serde_json::to_vec(v)? };
    b.push(b'\n');
    Ok(b)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> icu_mortality::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn open(path: &Path) -> Result<fs::File> {
    Ok(fs::File::open(path).map_err(|e| Error::io(path, e))?)
}

/// Raw tables carry a manifest when this tool wrote them; external files are hashed as-is.
fn raw_input(name: &str, path: &Path) -> Result<VerifiedInput> {
    if sidecar(path).exists() {
        Ok(verify(name, path)?)
    } else {
        Ok(external(name, path)?)
    }
}

fn model_file(v: Variant) -> String {
    format!("model_{}.json", v.name())
}

fn predictions_file(v: Variant) -> String {
    format!("predictions_{}.csv", v.name())
}

fn read_predictions(path: &Path, variant: Variant) -> Result<Predictions> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let (mut ids, mut scores) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        let (Some(id), Some(s)) = (rec.get(0), rec.get(1)) else {
            return Err(Error::Data(format!("{}: malformed row", path.display())).into());
        };
        ids.push(id.to_string());
        scores.push(s.parse::<f64>().map_err(|e| Error::Data(format!("{}: bad score `{s}`: {e}", path.display())))?);
    }
    Ok(Predictions {
        variant,
        stay_ids: ids,
        scores,
    })
}

fn synth(ctx: &Ctx, n_stays: Option<usize>, mortality_rate: Option<f64>) -> Result<()> {
    let mut gen = ctx.cfg.synth.clone();
    if let Some(n) = n_stays {
        gen.n_stays = n;
    }
    if let Some(r) = mortality_rate {
        gen.mortality_rate = r;
    }
    let cohort = generate_synthetic_cohort(&gen)?;
    let mut prov = ctx.provenance(&[]);
    prov.config_sha256 = config_hash(&gen);
    let raw = ctx.path("raw");
    prov.write(&raw.join("events.csv"), &csv_bytes(|b| write_events(b, &cohort.events))?)?;
    prov.write(&raw.join("statics.csv"), &csv_bytes(|b| write_statics(b, &cohort.statics))?)?;
    prov.write(&raw.join("notes.csv"), &csv_bytes(|b| write_notes(b, &cohort.notes))?)?;
    info!("synthesized {} stays, {} events, {} notes", cohort.statics.len(), cohort.events.len(), cohort.notes.len());
    Ok(())
}

fn ingest(ctx: &Ctx, events: &Option<PathBuf>, statics: &Option<PathBuf>, notes: &Option<PathBuf>) -> Result<()> {
    let p = &ctx.cfg.paths;
    let ev_path = ctx.raw(events, &p.events, "events.csv");
    let st_path = ctx.raw(statics, &p.statics, "statics.csv");
    let nt_path = ctx.raw(notes, &p.notes, "notes.csv");
    for path in [&ev_path, &st_path, &nt_path] {
        ctx.require(path)?;
    }
    let inputs = vec![raw_input("events", &ev_path)?, raw_input("statics", &st_path)?, raw_input("notes", &nt_path)?];
    check_lineage(&inputs)?;
    let (events, mut warnings) = read_events(open(&ev_path)?, &ev_path)?;
    let (statics, w2) = read_statics(open(&st_path)?, &st_path)?;
    let notes = read_notes(open(&nt_path)?, &nt_path)?;
    warnings.extend(w2);
    for w in &warnings {
        warn!("{w}");
    }
    let (stays, mut report) = pipeline::ingest(events, &statics, &notes);
    report.warnings.splice(0..0, warnings);
    if !report.is_conserved() {
        return Err(Error::Data("stay counts are not conserved by assembly".into()).into());
    }
    let prov = ctx.provenance(&inputs);
    prov.write(&ctx.path("stays.json"), &json_bytes(&stays, false)?)?;
    prov.write(&ctx.path("ingest_report.json"), &json_bytes(&report, true)?)?;
    info!("{} stays kept, {} excluded as short, {} malformed", report.returned, report.excluded_short, report.malformed);
    Ok(())
}

fn harmonize(ctx: &Ctx) -> Result<()> {
    let inputs = ctx.inputs(&[("stays", ctx.path("stays.json"))])?;
    let stays: Vec<StayRecord> = read_json(&ctx.path("stays.json"))?;
    let (harmonized, report): (Vec<HarmonizedStay>, HarmonizeReport) = pipeline::harmonize(&stays);
    let prov = ctx.provenance(&inputs);
    prov.write(&ctx.path("harmonized.json"), &json_bytes(&harmonized, false)?)?;
    prov.write(&ctx.path("harmonize_report.json"), &json_bytes(&report, true)?)?;
    info!("harmonized {} stays; {} events quarantined", harmonized.len(), report.quarantined_total());
    Ok(())
}

fn featurize(ctx: &Ctx, notes: &Option<PathBuf>) -> Result<()> {
    let nt_path = ctx.raw(notes, &ctx.cfg.paths.notes, "notes.csv");
    ctx.require(&nt_path)?;
    let mut inputs = vec![
        verify("stays", &ctx.path("stays.json"))?,
        verify("harmonized", &ctx.path("harmonized.json"))?,
        raw_input("notes", &nt_path)?,
    ];
    inputs.sort_by(|a, b| a.name.cmp(&b.name));
    check_lineage(&inputs)?;
    let stays: Vec<StayRecord> = read_json(&ctx.path("stays.json"))?;
    let harmonized: Vec<HarmonizedStay> = read_json(&ctx.path("harmonized.json"))?;
    let note_rows = read_notes(open(&nt_path)?, &nt_path)?;
    let table = Featurizer::new(ctx.cfg.features())?.featurize(&stays, &harmonized, &note_rows)?;
    ctx.provenance(&inputs).write(&ctx.path("features.json"), &json_bytes(&table, false)?)?;
    info!("featurized {} stays", table.stays.len());
    Ok(())
}

fn split(ctx: &Ctx) -> Result<()> {
    let inputs = ctx.inputs(&[("features", ctx.path("features.json"))])?;
    let table: FeatureTable = read_json(&ctx.path("features.json"))?;
    let split = pipeline::split_table(&table, ctx.cfg.split.fractions, ctx.cfg.split_seed())?;
    for w in &split.warnings {
        warn!("{w}");
    }
    ctx.provenance(&inputs).write(&ctx.path("split.json"), &json_bytes(&split, true)?)?;
    info!("split: {} train, {} val, {} test", split.train.len(), split.val.len(), split.test.len());
    Ok(())
}

fn train(ctx: &Ctx, variant: VariantArg) -> Result<()> {
    let inputs = ctx.inputs(&[("features", ctx.path("features.json")), ("split", ctx.path("split.json"))])?;
    let table: FeatureTable = read_json(&ctx.path("features.json"))?;
    let split: Split = read_json(&ctx.path("split.json"))?;
    let variants = variant.variants();
    let cps = pipeline::train_variants(&table, &split, &ctx.cfg.train, ctx.cfg.fusion, &variants)?;
    let prov = ctx.provenance(&inputs);
    for cp in &cps {
        prov.write(&ctx.path(&model_file(cp.variant)), &json_bytes(cp, false)?)?;
        info!(
            "{}: best validation {:.4} at epoch {} of {}",
            cp.variant.name(),
            cp.best_metric,
            cp.best_epoch,
            cp.log.len()
        );
    }
    Ok(())
}

fn predict(ctx: &Ctx, variant: VariantArg) -> Result<()> {
    for v in variant.variants() {
        let inputs = ctx.inputs(&[("features", ctx.path("features.json")), ("model", ctx.path(&model_file(v)))])?;
        let table: FeatureTable = read_json(&ctx.path("features.json"))?;
        let cp: ModelCheckpoint = read_json(&ctx.path(&model_file(v)))?;
        if cp.variant != v {
            return Err(Error::Data(format!("{} holds a {} model", model_file(v), cp.variant.name())).into());
        }
        let rows: Vec<usize> = (0..table.stays.len()).collect();
        let scores = cp.predict(&table, &rows)?;
        let mut out = String::from("stay_id,score\n");
        for (s, p) in table.stays.iter().zip(&scores) {
            out.push_str(&format!("{},{p}\n", s.stay_id));
        }
        ctx.provenance(&inputs).write(&ctx.path(&predictions_file(v)), out.as_bytes())?;
        info!("{}: scored {} stays", v.name(), scores.len());
    }
    Ok(())
}

fn evaluate_cmd(ctx: &Ctx, variant: VariantArg) -> Result<()> {
    let variants = variant.variants();
    let mut items = vec![("features".to_string(), ctx.path("features.json")), ("split".to_string(), ctx.path("split.json"))];
    for v in &variants {
        items.push((format!("predictions_{}", v.name()), ctx.path(&predictions_file(*v))));
        items.push((format!("model_{}", v.name()), ctx.path(&model_file(*v))));
    }
    let named: Vec<(&str, PathBuf)> = items.iter().map(|(n, p)| (n.as_str(), p.clone())).collect();
    let mut inputs = ctx.inputs(&named)?;
    // Predictions record their model under the generic name `model`.
    for v in &variants {
        let pred = inputs.iter().find(|i| i.name == format!("predictions_{}", v.name())).cloned();
        let model = inputs.iter().find(|i| i.name == format!("model_{}", v.name())).cloned();
        if let (Some(p), Some(mut m)) = (pred, model) {
            m.name = "model".into();
            check_lineage(&[p, m])?;
        }
    }
    inputs.sort_by(|a, b| a.name.cmp(&b.name));
    let table: FeatureTable = read_json(&ctx.path("features.json"))?;
    let split: Split = read_json(&ctx.path("split.json"))?;
    let preds: Vec<Predictions> = variants
        .iter()
        .map(|v| read_predictions(&ctx.path(&predictions_file(*v)), *v))
        .collect::<Result<_>>()?;
    let reference: Option<ModelCheckpoint> = match variants.last() {
        Some(v) => Some(read_json(&ctx.path(&model_file(*v)))?),
        None => None,
    };
    let eval = evaluate(&table, &split, &preds, &ctx.cfg.eval, ctx.cfg.eval_seed(), reference.as_ref().map(|c| &c.inputs))?;
    ctx.provenance(&inputs).write(&ctx.path("evaluation.json"), &json_bytes(&eval, true)?)?;
    for v in &eval.variants {
        info!("{}: test AUROC {}", v.variant.name(), v.test.metrics[&icu_mortality::eval::Metric::Auroc].cell());
    }
    Ok(())
}

fn audit_cmd(ctx: &Ctx, variant: VariantArg) -> Result<()> {
    let [v] = variant.variants()[..] else {
        bail!(Error::Usage("audit takes a single model variant".into()));
    };
    let inputs = ctx.inputs(&[
        ("features", ctx.path("features.json")),
        ("split", ctx.path("split.json")),
        ("predictions", ctx.path(&predictions_file(v))),
    ])?;
    let table: FeatureTable = read_json(&ctx.path("features.json"))?;
    let split: Split = read_json(&ctx.path("split.json"))?;
    let preds = read_predictions(&ctx.path(&predictions_file(v)), v)?;
    let audits = audit(&table, &split, &preds, &ctx.cfg.eval)?;
    ctx.provenance(&inputs).write(&ctx.path("audit.json"), &json_bytes(&audits, true)?)?;
    Ok(())
}

fn report(ctx: &Ctx) -> Result<()> {
    let inputs = ctx.inputs(&[("evaluation", ctx.path("evaluation.json")), ("audit", ctx.path("audit.json"))])?;
    let eval: Evaluation = read_json(&ctx.path("evaluation.json"))?;
    let audits: Vec<BiasAudit> = read_json(&ctx.path("audit.json"))?;
    let (text, doc) = render_report(&eval, &audits);
    let prov = ctx.provenance(&inputs);
    prov.write(&ctx.path("report.txt"), text.as_bytes())?;
    prov.write(&ctx.path("report.json"), &json_bytes(&doc, true)?)?;
    print!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    let work = cfg.paths.work_dir.clone();
    let ctx = Ctx {
        cfg,
        work,
        command: cli.command.name(),
    };
    match &cli.command {
        Command::Synth { n_stays, mortality_rate } => synth(&ctx, *n_stays, *mortality_rate),
        Command::Ingest { events, statics, notes } => ingest(&ctx, events, statics, notes),
        Command::Harmonize => harmonize(&ctx),
        Command::Featurize { notes } => featurize(&ctx, notes),
        Command::Split => split(&ctx),
        Command::Train { variant } => train(&ctx, *variant),
        Command::Predict { variant } => predict(&ctx, *variant),
        Command::Evaluate { variant } => evaluate_cmd(&ctx, *variant),
        Command::Audit { variant } => audit_cmd(&ctx, *variant),
        Command::Report => report(&ctx),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return e.exit_code() as u8;
        }
        if cause.downcast_ref::<csv::Error>().is_some() || cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return 1;
        }
    }
    3
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

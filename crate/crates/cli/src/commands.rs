use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nasflat::archspace::{
    flatten_encoding, load_encoding_table, proxy_table, read_arch_jsonl, write_arch_jsonl, ArchError, Architecture,
    EncodingKind, EncodingTable, SearchSpace,
};
use nasflat::devicesets::{partition_devices, DeviceError, DeviceSplit, LatencyTable};
use nasflat::pipeline::{self, index_archs, synthetic_accuracy, EvalEntry, EvalReport, PipelineError};
use nasflat::predictor::{init_predictor, PredictorError, PredictorState};
use nasflat::sampler::{self, SampleMethod, SampleRequest, SamplerError};
use nasflat::seed;
use nasflat::synthbench;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::manifest::RunManifest;
use crate::{CliError, CommonData, EvalArgs, PartitionArgs, PretrainArgs, SampleArgs, SearchArgs, SynthArgs, TransferArgs};

impl From<ArchError> for CliError {
    fn from(e: ArchError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DeviceError> for CliError {
    fn from(e: DeviceError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::UnknownMethod(_) | SamplerError::ZeroCount => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<PredictorError> for CliError {
    fn from(e: PredictorError) -> Self {
        match e {
            PredictorError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            PipelineError::Predictor(p) => p.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn spaces() -> Vec<SearchSpace> {
    vec![SearchSpace::nb201(), SearchSpace::fbnet()]
}

fn mkdir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>, m: &mut RunManifest) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    m.output(path);
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable output") + "\n"
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_archs(path: &Path) -> Result<Vec<Architecture>, CliError> {
    let archs = read_arch_jsonl(path, &spaces())?;
    if archs.is_empty() {
        return Err(CliError::Data(format!("{}: no architectures", path.display())));
    }
    if archs.iter().any(|a| a.space_id() != archs[0].space_id()) {
        return Err(CliError::Data(format!("{}: architectures from more than one space", path.display())));
    }
    Ok(archs)
}

fn space_of(archs: &[Architecture]) -> SearchSpace {
    SearchSpace::by_id(archs[0].space_id()).expect("validated on read")
}

fn load_split(path: &Path) -> Result<DeviceSplit, CliError> {
    let split: DeviceSplit = read_json(path)?;
    split.validate()?;
    Ok(split)
}

fn parse_kind(s: &str) -> Result<EncodingKind, CliError> {
    EncodingKind::parse(s).ok_or_else(|| {
        CliError::Usage(format!("unknown encoding kind {s:?}; valid kinds: zcp, arch2vec, cate, caz, custom"))
    })
}

/// Loads an encoding CSV, taking its width from the header.
fn load_encoding(path: &Path, kind: EncodingKind) -> Result<EncodingTable, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let cols = text.lines().next().map_or(0, |h| h.split(',').count());
    let dim = cols.saturating_sub(1);
    if let Some(std_dim) = kind.standard_dim() {
        if std_dim != dim {
            return Err(CliError::Data(format!(
                "{}: {kind:?} encodings are {std_dim} wide, file has {dim} columns",
                path.display()
            )));
        }
    }
    Ok(load_encoding_table(path, kind, dim)?)
}

fn sampler_method(name: &str) -> Result<SampleMethod, CliError> {
    Ok(name.parse::<SampleMethod>()?)
}

fn need(flag: Option<&PathBuf>, fallback: Option<&PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or(fallback)
        .cloned()
        .ok_or_else(|| CliError::Usage(format!("--{name} is required (or set paths.{name} in the config)")))
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let space = SearchSpace::by_id(&a.space)
        .ok_or_else(|| CliError::Usage(format!("unknown space {:?}; valid spaces: nb201, fbnet", a.space)))?;
    if a.devices == 0 || a.archs == 0 {
        return Err(CliError::Usage("--devices and --archs must be positive".into()));
    }
    if !(a.noise >= 0.0 && a.jitter_lo >= 0.0 && a.jitter_hi >= a.jitter_lo) {
        return Err(CliError::Usage("need --noise >= 0 and 0 <= --jitter-lo <= --jitter-hi".into()));
    }
    let roots = a.roots.unwrap_or((a.devices / 3).max(1));
    let mut m = RunManifest::start(
        "synth",
        a.seed,
        json!({"space": a.space, "devices": a.devices, "archs": a.archs, "roots": roots,
               "jitter_lo": a.jitter_lo, "jitter_hi": a.jitter_hi, "noise": a.noise}),
    );
    mkdir(&a.out_dir)?;
    let devices = synthbench::gen_family(
        &space,
        a.devices,
        roots,
        (a.jitter_lo, a.jitter_hi),
        a.noise,
        seed::derive(a.seed, "synth/devices"),
    );
    let (archs, table) = synthbench::gen_dataset(&space, &devices, a.archs, seed::derive(a.seed, "synth/archs"));

    let mut buf = Vec::new();
    write_arch_jsonl(&mut buf, &archs).map_err(|e| CliError::Internal(e.to_string()))?;
    write(&a.out_dir.join("archs.jsonl"), &buf, &mut m)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    write(&a.out_dir.join("latency.csv"), &buf, &mut m)?;
    write(&a.out_dir.join("devices.json"), to_json(&devices), &mut m)?;
    let mut buf = Vec::new();
    proxy_table(&archs, &space)?.write_csv(&mut buf)?;
    write(&a.out_dir.join("zcp.csv"), &buf, &mut m)?;
    let mut onehot = EncodingTable::new(EncodingKind::Custom, space.slot_count * space.op_vocab_size());
    for arch in &archs {
        onehot.insert(arch.arch_id(), flatten_encoding(arch, &space)?)?;
    }
    let mut buf = Vec::new();
    onehot.write_csv(&mut buf)?;
    write(&a.out_dir.join("onehot.csv"), &buf, &mut m)?;
    m.finish(&a.out_dir)?;
    println!("wrote {} archs x {} devices to {}", archs.len(), devices.len(), a.out_dir.display());
    Ok(())
}

pub fn partition(a: &PartitionArgs) -> Result<(), CliError> {
    let mut m = RunManifest::start("partition", a.seed, json!({"m": a.m, "n": a.n}));
    m.input(&a.latency)?;
    let table = LatencyTable::load(&a.latency)?;
    let split = partition_devices(&table, a.m, a.n, seed::derive(a.seed, "partition"))?;
    split.validate()?;
    mkdir(&a.out)?;
    write(&a.out.join("split.json"), to_json(&split), &mut m)?;
    m.finish(&a.out)?;
    print!("{}", to_json(&split));
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct Selection {
    method: SampleMethod,
    seed: u64,
    arch_ids: Vec<String>,
}

pub fn sample(a: &SampleArgs) -> Result<(), CliError> {
    let method = sampler_method(&a.sampler)?;
    let mut m = RunManifest::start(
        "sample",
        a.seed,
        json!({"sampler": method.name(), "samples": a.samples, "encoding_kind": a.encoding_kind}),
    );
    m.input(&a.archs)?;
    let archs = load_archs(&a.archs)?;
    let space = space_of(&archs);
    let encoding = match &a.encoding {
        Some(p) => {
            m.input(p)?;
            Some(load_encoding(p, parse_kind(&a.encoding_kind)?)?)
        }
        None => None,
    };
    let reference = match &a.reference {
        Some(p) => {
            m.input(p)?;
            Some(LatencyTable::load(p)?)
        }
        None => None,
    };
    let req = SampleRequest {
        method,
        n: a.samples,
        seed: seed::derive(a.seed, "sample"),
        encoding: encoding.as_ref(),
        reference: reference.as_ref(),
    };
    let picks = sampler::sample(&archs, &space, &req)?;
    mkdir(&a.out)?;
    let sel = Selection { method, seed: a.seed, arch_ids: picks };
    write(&a.out.join("selection.json"), to_json(&sel), &mut m)?;
    m.finish(&a.out)?;
    Ok(())
}

struct Loaded {
    cfg: RunConfig,
    seed: u64,
    table: LatencyTable,
    archs: Vec<Architecture>,
    encoding: Option<EncodingTable>,
}

fn load_common(d: &CommonData, m: &mut RunManifest) -> Result<Loaded, CliError> {
    let mut cfg = match &d.config {
        Some(p) => {
            m.input(p)?;
            RunConfig::load(p)?
        }
        None => RunConfig::parse("{}")?,
    };
    let seed = d.seed.unwrap_or(cfg.seed);
    cfg.seed = seed;
    let latency = need(d.latency.as_ref(), cfg.paths.latency.as_ref(), "latency")?;
    let archs_path = need(d.archs.as_ref(), cfg.paths.archs.as_ref(), "archs")?;
    m.input(&latency)?;
    m.input(&archs_path)?;
    let table = LatencyTable::load(&latency)?;
    let archs = load_archs(&archs_path)?;
    if archs[0].space_id() != cfg.space {
        return Err(CliError::Data(format!(
            "{}: architectures are from {:?} but the config space is {:?}",
            archs_path.display(),
            archs[0].space_id(),
            cfg.space
        )));
    }
    let enc_path = d.encoding.as_ref().or(cfg.paths.encoding.as_ref()).cloned();
    let encoding = match &enc_path {
        Some(p) => {
            m.input(p)?;
            Some(load_encoding(p, parse_kind(&cfg.encoding_kind)?)?)
        }
        None => None,
    };
    if cfg.predictor.supplementary_dim > 0 && encoding.as_ref().map(EncodingTable::dim) != Some(cfg.predictor.supplementary_dim) {
        return Err(CliError::Usage(format!(
            "predictor.supplementary_dim = {} needs an --encoding of that width",
            cfg.predictor.supplementary_dim
        )));
    }
    cfg.paths.latency = Some(latency);
    cfg.paths.archs = Some(archs_path);
    cfg.paths.encoding = enc_path;
    Ok(Loaded { cfg, seed, table, archs, encoding })
}

pub fn pretrain(a: &PretrainArgs) -> Result<(), CliError> {
    let mut m = RunManifest::start("pretrain", 0, json!(null));
    let mut l = load_common(&a.data, &mut m)?;
    let split_path = need(a.split.as_ref(), l.cfg.paths.split.as_ref(), "split")?;
    m.input(&split_path)?;
    let split = load_split(&split_path)?;
    l.cfg.paths.split = Some(split_path);
    let space = l.cfg.space();
    let init_seed = seed::derive(l.seed, "predictor/init");
    let train = pipeline::TrainConfig { seed: seed::derive(l.seed, "pretrain"), ..l.cfg.train.clone() };
    let mut state = init_predictor(&l.cfg.predictor, &[space], &split.source, init_seed)?;
    let idx = index_archs(&l.archs);
    let t0 = std::time::Instant::now();
    let log = pipeline::pretrain(&mut state, &l.table, &split.source, &idx, l.encoding.as_ref(), &train)?;
    m.timing("pretrain_seconds", t0.elapsed().as_secs_f64());
    m.master_seed = l.seed;
    m.config = serde_json::to_value(&l.cfg).expect("serializable config");
    mkdir(&a.out)?;
    state.save(&a.out)?;
    m.output(&a.out.join("params.json"));
    m.output(&a.out.join("meta.json"));
    write(&a.out.join("train_log.json"), to_json(&log), &mut m)?;
    m.finish(&a.out)?;
    if let Some(last) = log.epoch_loss.last() {
        println!("pretrained {} epochs on {} devices; final loss {last:.6}", log.epoch_loss.len(), split.source.len());
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct TransferRecord {
    target: String,
    trial: usize,
    /// Checkpoint directory, relative to the transfer output directory.
    dir: String,
    sampler: SampleMethod,
    init_source: String,
    arch_ids: Vec<String>,
}

pub fn transfer(a: &TransferArgs) -> Result<(), CliError> {
    let mut m = RunManifest::start("transfer", 0, json!(null));
    let mut l = load_common(&a.data, &mut m)?;
    if let Some(s) = &a.sampler {
        l.cfg.sampler = sampler_method(s)?;
    }
    if let Some(n) = a.samples {
        l.cfg.samples = n;
    }
    let split_path = need(a.split.as_ref(), l.cfg.paths.split.as_ref(), "split")?;
    m.input(&split_path)?;
    let split = load_split(&split_path)?;
    l.cfg.paths.split = Some(split_path);
    m.input(&a.checkpoint)?;
    let base = PredictorState::load(&a.checkpoint)?;
    let space = l.cfg.space();
    let idx = index_archs(&l.archs);
    let sources = l.table.restrict_devices(&split.source);
    let method = l.cfg.sampler;
    if matches!(method, SampleMethod::Cosine | SampleMethod::Kmeans) && l.encoding.is_none() {
        return Err(CliError::Usage(format!("sampler {method} needs --encoding")));
    }
    mkdir(&a.out)?;
    let t0 = std::time::Instant::now();
    let mut records = Vec::new();
    for trial in 0..l.cfg.train.trials {
        for target in &split.target {
            let measured: BTreeSet<String> = l.table.archs_of(target).into_iter().collect();
            let pool: Vec<Architecture> = l.archs.iter().filter(|x| measured.contains(x.arch_id())).cloned().collect();
            let req = SampleRequest {
                method,
                n: l.cfg.samples,
                seed: seed::derive(l.seed, &format!("trial{trial}/{target}/sample")),
                encoding: l.encoding.as_ref(),
                reference: Some(&sources),
            };
            let picks = sampler::sample(&pool, &space, &req)?;
            let rows = l.table.select(target, &picks);
            let mut state = base.clone();
            let train = pipeline::TrainConfig {
                seed: seed::derive(l.seed, &format!("trial{trial}/transfer")),
                ..l.cfg.train.clone()
            };
            let log = pipeline::transfer(
                &mut state,
                target,
                &rows,
                &sources,
                &split.source,
                &idx,
                l.encoding.as_ref(),
                &train,
            )?;
            let rel = format!("{target}/trial{trial}");
            let dir = a.out.join(&rel);
            state.save(&dir)?;
            m.output(&dir);
            records.push(TransferRecord {
                target: target.clone(),
                trial,
                dir: rel,
                sampler: method,
                init_source: log.init_source,
                arch_ids: picks,
            });
        }
    }
    m.timing("transfer_seconds", t0.elapsed().as_secs_f64());
    m.master_seed = l.seed;
    m.config = serde_json::to_value(&l.cfg).expect("serializable config");
    write(&a.out.join("transfers.json"), to_json(&records), &mut m)?;
    m.finish(&a.out)?;
    println!("transferred to {} targets x {} trials", split.target.len(), l.cfg.train.trials);
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let mut m = RunManifest::start("eval", 0, json!({"encoding_kind": a.encoding_kind, "scatter": a.scatter}));
    let records_path = a.checkpoint.join("transfers.json");
    m.input(&records_path)?;
    let records: Vec<TransferRecord> = read_json(&records_path)?;
    m.input(&a.latency)?;
    m.input(&a.archs)?;
    let table = LatencyTable::load(&a.latency)?;
    let archs = load_archs(&a.archs)?;
    let idx = index_archs(&archs);
    let encoding = match &a.encoding {
        Some(p) => {
            m.input(p)?;
            Some(load_encoding(p, parse_kind(&a.encoding_kind)?)?)
        }
        None => None,
    };
    mkdir(&a.out)?;
    if a.scatter {
        mkdir(&a.out.join("scatter"))?;
    }
    let mut entries = Vec::new();
    for r in &records {
        let dir = a.checkpoint.join(&r.dir);
        m.input(&dir)?;
        let state = PredictorState::load(&dir)?;
        let used: BTreeSet<&String> = r.arch_ids.iter().collect();
        let held: Vec<String> = table.archs_of(&r.target).into_iter().filter(|x| !used.contains(x)).collect();
        let heldout = table.select(&r.target, &held);
        let sc = pipeline::scatter(&state, &r.target, &heldout, &idx, encoding.as_ref())?;
        let rho = nasflat::devicesets::spearman(&sc.pred, &sc.truth)?;
        if a.scatter {
            let mut buf = Vec::new();
            sc.write_csv(&mut buf)?;
            write(&a.out.join("scatter").join(format!("{}_trial{}.csv", r.target, r.trial)), &buf, &mut m)?;
        }
        entries.push(EvalEntry {
            device_id: r.target.clone(),
            trial: r.trial,
            spearman: rho,
            samples_used: r.arch_ids.len(),
            heldout: held.len(),
        });
    }
    let report = EvalReport::from_entries(entries);
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    write(&a.out.join("report.csv"), &buf, &mut m)?;
    write(&a.out.join("report.json"), report.to_json(), &mut m)?;
    m.finish(&a.out)?;
    println!("mean spearman {:.4} (std {:.4}) over {} runs", report.mean, report.std, report.entries.len());
    Ok(())
}

pub fn search(a: &SearchArgs) -> Result<(), CliError> {
    let mut m = RunManifest::start(
        "search",
        0,
        json!({"constraint_ms": a.constraint_ms, "top_k": a.top_k, "device": a.device}),
    );
    if a.top_k == 0 {
        return Err(CliError::Usage("--top-k must be positive".into()));
    }
    m.input(&a.checkpoint)?;
    m.input(&a.archs)?;
    let state = PredictorState::load(&a.checkpoint)?;
    let archs = load_archs(&a.archs)?;
    let space = space_of(&archs);
    let device = match &a.device {
        Some(d) => d.clone(),
        None => state
            .devices()
            .last()
            .cloned()
            .ok_or_else(|| CliError::Data("checkpoint has no registered devices".into()))?,
    };
    let encoding = match &a.encoding {
        Some(p) => {
            m.input(p)?;
            Some(load_encoding(p, parse_kind(&a.encoding_kind)?)?)
        }
        None => None,
    };
    let oracle = |x: &Architecture| synthetic_accuracy(x, &space);
    let res = pipeline::latency_constrained_search(
        &archs,
        &oracle,
        &state,
        &device,
        a.constraint_ms,
        a.top_k,
        encoding.as_ref(),
    )?;
    mkdir(&a.out)?;
    let mut text = String::from("rank,arch_id,predicted_ms,accuracy\n");
    for (i, h) in res.ranked.iter().enumerate() {
        text.push_str(&format!("{},{},{:?},{:?}\n", i + 1, h.arch_id, h.predicted_ms, h.accuracy));
    }
    write(&a.out.join("results.csv"), text, &mut m)?;
    m.timing("predictor_seconds", res.predictor_seconds);
    m.timing("search_seconds", res.search_seconds);
    m.config = json!({"constraint_ms": a.constraint_ms, "top_k": a.top_k, "device": device,
                      "candidates": res.candidates, "feasible": res.feasible});
    m.finish(&a.out)?;
    println!(
        "{} of {} candidates feasible; predictor {:.3}s, search {:.6}s",
        res.feasible, res.candidates, res.predictor_seconds, res.search_seconds
    );
    Ok(())
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crop_core::grid::{parse_region, recall, region_to_tokens, Region, TokenGrid};
use crop_core::harness::bench::{time_reps, Pipeline, PipelineCost};
use crop_core::harness::dataset::{generate, read_samples, write_samples, Sample};
use crop_core::harness::relacc::{relacc, Metrics};
use crop_core::harness::render::Overlay;
use crop_core::harness::report::{Fingerprint, RunReport, SampleRecord, Timing};
use crop_core::harness::sweep::{sweep_k, to_csv, PrunePoint, SweepItem, SweepSpec};
use crop_core::harness::trace::{QueryAttention, TraceRecord};
use crop_core::harness::{checkpoint, HarnessError};
use crop_core::ilp::{count_flops, proxy_quality, PositionPolicy, PruneConfig, ToyTransformer};
use crop_core::localizer::{fit_budget_dataset, fit_to_count, mean_recall, BlockDims, BudgetSpec, Localizer, Predictions};
use crop_core::plc::{compress, compress_ablated, partition, PlcParams, RowTag};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::{
    BenchArgs, Cli, Command, FitArgs, GenArgs, IlpArgs, LocalizerKind, LocateArgs, MapArgs, PlcArgs, PolicyArg, PrunePointArg, RecallArgs,
    RegionSource, RelaccArgs, RenderArgs, SweepArgs,
};

type Result<T> = std::result::Result<T, HarnessError>;

struct Ctx {
    seed: u64,
    config: RunConfig,
    out: Option<PathBuf>,
}

impl Ctx {
    /// Writes `contents` to `<out>/<name>`, or to stdout without `--out`.
    fn primary(&self, name: &str, contents: &str) -> Result<()> {
        match &self.out {
            Some(_) => self.secondary(name, contents),
            None => {
                print!("{contents}");
                Ok(())
            }
        }
    }

    /// Writes only when an output directory was given.
    fn secondary(&self, name: &str, contents: &str) -> Result<()> {
        let Some(dir) = &self.out else {
            log::info!("no --out directory; skipping {name}");
            return Ok(());
        };
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|e| HarnessError::io(&path, e))?;
        log::info!("wrote {}", path.display());
        Ok(())
    }

    fn fingerprint(&self, command: &str) -> Fingerprint {
        Fingerprint::new()
            .add("command", command.as_bytes())
            .add("seed", &self.seed.to_le_bytes())
            .add_json("config", &self.config)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let ctx = Ctx {
        seed: cli.seed,
        config: RunConfig::load(cli.config.as_deref())?,
        out: cli.out.clone(),
    };
    match &cli.command {
        Command::Map(a) => map(&ctx, a),
        Command::Locate(a) => locate(&ctx, a),
        Command::Fit(a) => fit(&ctx, a),
        Command::Plc(a) => plc(&ctx, a),
        Command::Ilp(a) => ilp(&ctx, a),
        Command::SweepK(a) => sweep(&ctx, a),
        Command::Bench(a) => bench(&ctx, a),
        Command::Relacc(a) => relacc_cmd(&ctx, a),
        Command::Recall(a) => recall_cmd(&ctx, a),
        Command::Render(a) => render(&ctx, a),
        Command::Gen(a) => gen(&ctx, a),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| HarnessError::io(path, e))
}

struct Dataset {
    samples: Vec<Sample>,
    bytes: Vec<u8>,
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = read_bytes(path)?;
    let samples = read_samples(bytes.as_slice())?;
    if samples.is_empty() {
        return Err(HarnessError::Data(format!("{}: no samples", path.display())));
    }
    Ok(Dataset { samples, bytes })
}

fn parse_cli_region(text: &str) -> Result<Region> {
    let parsed = parse_region(text)?;
    for ev in &parsed.repairs {
        log::warn!("region `{text}`: {ev}");
    }
    Ok(parsed.region)
}

/// Regions per sample plus the bytes that determined them, for fingerprints.
fn resolve_regions(ctx: &Ctx, samples: &[Sample], src: &RegionSource) -> Result<(Vec<Region>, Vec<u8>)> {
    let (predictions, pred_bytes) = match &src.predictions {
        Some(p) => {
            let bytes = read_bytes(p)?;
            (Some(Predictions::from_reader(bytes.as_slice())?), bytes)
        }
        None => (None, Vec::new()),
    };
    let localizer = match src.localizer {
        LocalizerKind::Gt => None,
        LocalizerKind::File => Some(Localizer::FileBacked(
            predictions
                .clone()
                .ok_or_else(|| HarnessError::Config("--localizer file needs --predictions".into()))?,
        )),
        LocalizerKind::Center => Some(Localizer::Center),
        LocalizerKind::Random => Some(Localizer::Random {
            seed: src.localizer_seed.unwrap_or(ctx.seed),
        }),
    };
    let regions = samples
        .iter()
        .map(|s| match &localizer {
            None => s.require_gt(),
            Some(loc) => {
                let dims_from = match predictions.as_ref().and_then(|p| p.get(&s.id)) {
                    Some(r) => r,
                    None => s.require_gt()?,
                };
                Ok(loc.localize(&s.id, BlockDims::of(&dims_from))?)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut tag = format!("{:?}:{:?}:", src.localizer, src.localizer_seed.unwrap_or(ctx.seed)).into_bytes();
    tag.extend(pred_bytes);
    Ok((regions, tag))
}

fn json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("serializable");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct PredictionOut<'a> {
    id: &'a str,
    region: String,
}

fn map(ctx: &Ctx, a: &MapArgs) -> Result<()> {
    let region = parse_cli_region(&a.region)?;
    let grid = TokenGrid::new(a.side, a.views)?;
    let set = region_to_tokens(&region, &grid);
    let mut s = format!("# region {region} side {} views {} tokens {}\n", a.side, a.views, set.len());
    for i in set.indices() {
        s.push_str(&format!("{i}\n"));
    }
    ctx.primary("map.txt", &s)
}

fn locate(ctx: &Ctx, a: &LocateArgs) -> Result<()> {
    let data = load_dataset(&a.dataset)?;
    let (regions, _) = resolve_regions(ctx, &data.samples, &a.source)?;
    let out: String = data
        .samples
        .iter()
        .zip(&regions)
        .map(|(s, r)| json_line(&PredictionOut { id: &s.id, region: r.format() }))
        .collect();
    ctx.primary("locate.jsonl", &out)
}

#[derive(Serialize)]
struct FitLine<'a> {
    id: &'a str,
    region: String,
    kept: usize,
    target: usize,
    steps: usize,
}

fn fit(ctx: &Ctx, a: &FitArgs) -> Result<()> {
    let data = load_dataset(&a.dataset)?;
    let (regions, tag) = resolve_regions(ctx, &data.samples, &a.source)?;
    let grid = data.samples[0].grid()?;
    if data.samples.iter().any(|s| s.grid().ok() != Some(grid)) {
        return Err(HarnessError::Data("budget fitting needs every sample on the same token grid".into()));
    }
    let spec = BudgetSpec::new(a.rate, grid)?;
    let target = spec.kept_target();
    let fits = if a.per_sample {
        regions.iter().map(|r| fit_to_count(r, &grid, target)).collect()
    } else {
        fit_budget_dataset(&regions, &spec)
    };
    let mut lines = String::new();
    let mut records = Vec::new();
    let total = grid.total_tokens();
    for (s, f) in data.samples.iter().zip(&fits) {
        lines.push_str(&json_line(&FitLine {
            id: &s.id,
            region: f.region.format(),
            kept: f.kept,
            target,
            steps: f.steps,
        }));
        records.push(SampleRecord {
            id: s.id.clone(),
            region: f.region,
            visual_total: total,
            kept: f.kept,
            dropped: total - f.kept,
            rate: (total - f.kept) as f64 / total as f64,
            proxy_quality: None,
            recall: None,
        });
    }
    let fp = ctx
        .fingerprint("fit")
        .add("dataset", &data.bytes)
        .add("regions", &tag)
        .add("rate", &a.rate.to_le_bytes())
        .add("per_sample", &[a.per_sample as u8])
        .finish();
    let mut report = RunReport::new("fit", fp, records);
    report.metrics.insert("target_kept".into(), target as f64);
    ctx.primary("fit.jsonl", &lines)?;
    ctx.secondary("fit_report.json", &report.to_json())
}

#[derive(Serialize)]
struct PlcLine<'a> {
    id: &'a str,
    region: String,
    input_tokens: usize,
    contextual: usize,
    noncontextual: usize,
    output_rows: usize,
    provenance: BTreeMap<&'static str, usize>,
    /// SHA-256 of the output matrix as little-endian f64, row-major.
    checksum: String,
}

fn tag_name(t: RowTag) -> &'static str {
    match t {
        RowTag::FusedAnchor => "fused-anchor",
        RowTag::CompressedNoncontextual => "compressed-noncontextual",
        RowTag::EmptySource => "empty-source",
    }
}

fn checksum(data: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in data {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn plc(ctx: &Ctx, a: &PlcArgs) -> Result<()> {
    let data = load_dataset(&a.dataset)?;
    let (regions, _) = resolve_regions(ctx, &data.samples, &a.source)?;
    let dim = ctx.config.model.dim;
    let params = match &a.checkpoint {
        Some(p) => checkpoint::load(p)?,
        None => PlcParams::init(dim, ctx.config.plc, ctx.seed)?,
    };
    if let Some(p) = &a.save_checkpoint {
        checkpoint::save(p, &params)?;
    }
    let mut out = String::new();
    for (s, region) in data.samples.iter().zip(&regions) {
        let tokens = s.visual_tokens(params.dim(), &ctx.config.synth, ctx.seed)?;
        let part = partition(&tokens, region);
        let (matrix, provenance) = if a.ablate {
            let m = compress_ablated(&tokens, region, &params)?;
            let mut counts = BTreeMap::new();
            counts.insert("compressed-contextual", params.config().contextual_queries);
            counts.insert(
                if part.noncontextual.is_empty() { "empty-source" } else { "compressed-noncontextual" },
                params.config().noncontextual_queries,
            );
            (m, counts)
        } else {
            let o = compress(&tokens, region, &params)?;
            let mut counts = BTreeMap::new();
            for t in &o.provenance {
                *counts.entry(tag_name(*t)).or_insert(0) += 1;
            }
            (o.tokens, counts)
        };
        out.push_str(&json_line(&PlcLine {
            id: &s.id,
            region: region.format(),
            input_tokens: tokens.len(),
            contextual: part.contextual.len(),
            noncontextual: part.noncontextual.len(),
            output_rows: matrix.rows(),
            provenance,
            checksum: checksum(matrix.data()),
        }));
    }
    ctx.primary("plc.jsonl", &out)
}

fn policy(p: PolicyArg) -> PositionPolicy {
    match p {
        PolicyArg::Keep => PositionPolicy::KeepOriginal,
        PolicyArg::Reindex => PositionPolicy::Reindex,
    }
}

fn fitted_regions(data: &Dataset, regions: Vec<Region>, rate: Option<f64>) -> Result<Vec<Region>> {
    let Some(rate) = rate else {
        return Ok(regions);
    };
    let grid = data.samples[0].grid()?;
    if data.samples.iter().any(|s| s.grid().ok() != Some(grid)) {
        return Err(HarnessError::Data("budget fitting needs every sample on the same token grid".into()));
    }
    let spec = BudgetSpec::new(rate, grid)?;
    Ok(fit_budget_dataset(&regions, &spec).into_iter().map(|f| f.region).collect())
}

fn read_metrics(path: &Path) -> Result<Metrics> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let bad = |e: String| HarnessError::Data(format!("{}: {e}", path.display()));
    let value: serde_json::Value = if path.extension().is_some_and(|e| e == "toml") {
        let t: toml::Value = toml::from_str(&text).map_err(|e| bad(e.to_string()))?;
        serde_json::to_value(t).map_err(|e| bad(e.to_string()))?
    } else {
        serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?
    };
    let table = value.get("metrics").cloned().unwrap_or(value);
    serde_json::from_value(table).map_err(|e| bad(format!("expected a table of numbers: {e}")))
}

fn ilp(ctx: &Ctx, a: &IlpArgs) -> Result<()> {
    let data = load_dataset(&a.dataset)?;
    let (regions, tag) = resolve_regions(ctx, &data.samples, &a.source)?;
    let regions = fitted_regions(&data, regions, a.rate)?;
    let cfg = ctx.config.model(ctx.seed);
    let model = ToyTransformer::new(cfg)?;
    let pol = policy(a.policy);
    let mut records = Vec::new();
    let mut traces = String::new();
    for (s, region) in data.samples.iter().zip(&regions) {
        let seq = s.sequence(cfg.dim, &ctx.config.synth, ctx.seed)?;
        let base = model.forward_baseline(&seq)?;
        let (trace, keep, attention) = if a.topr {
            let budget = region_to_tokens(region, &seq.visual().grid()).len();
            let (t, keep, maps) = model.forward_topr(&seq, a.layer, budget, pol)?;
            let att = QueryAttention::from_maps(&maps, seq.visual_rows(), seq.query_rows());
            (t, keep, Some(att))
        } else {
            let pc = PruneConfig::new(a.layer, *region, pol, &cfg)?;
            let keep = region_to_tokens(region, &seq.visual().grid()).into_vec();
            (model.forward_ilp(&seq, &pc)?, keep, None)
        };
        let report = trace.report.clone().expect("pruned runs carry a report");
        records.push(SampleRecord {
            id: s.id.clone(),
            region: *region,
            visual_total: report.visual_total,
            kept: report.visual_kept,
            dropped: report.visual_dropped,
            rate: report.rate,
            proxy_quality: Some(proxy_quality(&base, &trace)),
            recall: s.gt()?.map(|g| recall(&g, region)),
        });
        if a.trace {
            traces.push_str(&json_line(&TraceRecord {
                id: s.id.clone(),
                method: if a.topr { "top-r" } else { "region" }.into(),
                kept: keep,
                report,
                attention,
            }));
        }
    }
    let fp = ctx
        .fingerprint("ilp")
        .add("dataset", &data.bytes)
        .add("regions", &tag)
        .add_json("args", &(a.layer, a.rate, a.topr, format!("{:?}", a.policy)))
        .finish();
    let mut report = RunReport::new("ilp", fp, records);
    if let Some(base_path) = &a.baseline {
        let baseline = read_metrics(base_path)?;
        let ra = relacc(&report.metrics, &baseline, None)?;
        report.baseline = Some(base_path.display().to_string());
        report.relacc = Some(ra);
    }
    if a.trace {
        ctx.secondary("trace.jsonl", &traces)?;
    }
    ctx.primary("ilp_report.json", &report.to_json())
}

fn parse_ks(text: Option<&str>, layers: usize) -> Result<Vec<usize>> {
    let Some(text) = text else {
        return Ok((1..=layers).collect());
    };
    let bad = || HarnessError::Config(format!("bad --k `{text}`; use `a..b` or `a,b,c`"));
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

fn sweep(ctx: &Ctx, a: &SweepArgs) -> Result<()> {
    let data = load_dataset(&a.dataset)?;
    let (regions, _) = resolve_regions(ctx, &data.samples, &a.source)?;
    let cfg = ctx.config.model(ctx.seed);
    let model = ToyTransformer::new(cfg)?;
    let items = data
        .samples
        .iter()
        .zip(regions)
        .map(|(s, region)| {
            Ok(SweepItem {
                sequence: s.sequence(cfg.dim, &ctx.config.synth, ctx.seed)?,
                region,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = SweepSpec {
        ks: parse_ks(a.k.as_deref(), cfg.layers)?,
        rates: a.rates.clone(),
        point: match a.prune_point {
            PrunePointArg::After => PrunePoint::After,
            PrunePointArg::Input => PrunePoint::Input,
        },
        policy: policy(a.policy),
        timing: !a.no_timing,
    };
    let rows = sweep_k(&model, &items, &spec)?;
    ctx.primary("sweep.csv", &to_csv(&rows))
}

#[derive(Serialize)]
struct BenchRow {
    rate: f64,
    mean_kept: f64,
    baseline: Timing,
    ilp: Timing,
    /// ILP median over baseline median.
    time_ratio: f64,
    flops_baseline: u64,
    flops_ilp: u64,
    pipeline: PipelineCost,
}

#[derive(Serialize)]
struct BenchReport {
    fingerprint: String,
    layers: usize,
    dim: usize,
    heads: usize,
    mlp: usize,
    prune_after: usize,
    samples: usize,
    localizer_latency_s: f64,
    items: usize,
    rows: Vec<BenchRow>,
}

fn bench(ctx: &Ctx, a: &BenchArgs) -> Result<()> {
    if a.reps < 3 {
        return Err(HarnessError::Config(format!("--reps must be at least 3, got {}", a.reps)));
    }
    let data = load_dataset(&a.dataset)?;
    let (regions, tag) = resolve_regions(ctx, &data.samples, &a.source)?;
    let cfg = ctx.config.model(ctx.seed);
    let model = ToyTransformer::new(cfg)?;
    let n = a.samples.clamp(1, data.samples.len());
    let seqs = data.samples[..n]
        .iter()
        .map(|s| s.sequence(cfg.dim, &ctx.config.synth, ctx.seed))
        .collect::<Result<Vec<_>>>()?;
    let baseline = time_reps(a.reps, || {
        for s in &seqs {
            std::hint::black_box(model.forward_baseline(s).expect("validated sequence"));
        }
    });
    let mut rows = Vec::new();
    for &rate in &a.rates {
        let fitted = fitted_regions(&data, regions.clone(), Some(rate))?;
        let configs = fitted[..n]
            .iter()
            .map(|r| PruneConfig::new(a.layer, *r, PositionPolicy::KeepOriginal, &cfg))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let ilp = time_reps(a.reps, || {
            for (s, pc) in seqs.iter().zip(&configs) {
                std::hint::black_box(model.forward_ilp(s, pc).expect("validated region"));
            }
        });
        let mut kept = 0usize;
        let (mut fb, mut fi) = (0u64, 0u64);
        for (s, r) in seqs.iter().zip(&fitted) {
            let k = region_to_tokens(r, &s.visual().grid()).len();
            kept += k;
            let before = s.len() as u64;
            let after = (s.len() - s.visual_len() + k) as u64;
            let (l, d, h, m) = (cfg.layers as u64, cfg.dim as u64, cfg.heads as u64, cfg.mlp as u64);
            fb += count_flops(before, before, 0, l, d, h, m);
            fi += count_flops(before, after, a.layer as u64, l, d, h, m);
        }
        let pipeline = Pipeline {
            localizer_s: a.localizer_latency,
            backbone_s: ilp.median_s / n as f64,
            items: a.items,
        }
        .cost();
        rows.push(BenchRow {
            rate,
            mean_kept: kept as f64 / n as f64,
            time_ratio: ilp.median_s / baseline.median_s,
            baseline: baseline.clone(),
            ilp,
            flops_baseline: fb,
            flops_ilp: fi,
            pipeline,
        });
    }
    let report = BenchReport {
        fingerprint: ctx
            .fingerprint("bench")
            .add("dataset", &data.bytes)
            .add("regions", &tag)
            .add_json("args", &(&a.rates, a.reps, a.layer, n, a.localizer_latency, a.items))
            .finish(),
        layers: cfg.layers,
        dim: cfg.dim,
        heads: cfg.heads,
        mlp: cfg.mlp,
        prune_after: a.layer,
        samples: n,
        localizer_latency_s: a.localizer_latency,
        items: a.items,
        rows,
    };
    let mut s = serde_json::to_string_pretty(&report).expect("serializable");
    s.push('\n');
    ctx.primary("bench.json", &s)
}

fn relacc_cmd(ctx: &Ctx, a: &RelaccArgs) -> Result<()> {
    let run = read_metrics(&a.run)?;
    let base = read_metrics(&a.baseline)?;
    let weights = a.weights.as_deref().map(read_metrics).transpose()?;
    let r = relacc(&run, &base, weights.as_ref())?;
    #[derive(Serialize)]
    struct Out<'a> {
        relacc: &'a str,
        value: f64,
        ratios: &'a BTreeMap<String, f64>,
        weighted: bool,
    }
    let pct = r.percent();
    ctx.primary(
        "relacc.json",
        &json_line(&Out {
            relacc: &pct,
            value: r.value,
            ratios: &r.ratios,
            weighted: weights.is_some(),
        }),
    )
}

fn recall_cmd(ctx: &Ctx, a: &RecallArgs) -> Result<()> {
    let data = load_dataset(&a.dataset)?;
    let (pred, _) = resolve_regions(ctx, &data.samples, &a.source)?;
    let gt = data.samples.iter().map(Sample::require_gt).collect::<Result<Vec<_>>>()?;
    let summary = mean_recall(&gt, &pred)?;
    #[derive(Serialize)]
    struct Line<'a> {
        id: &'a str,
        gt: String,
        pred: String,
        recall: f64,
    }
    let lines: String = data
        .samples
        .iter()
        .zip(gt.iter().zip(&pred))
        .map(|(s, (g, p))| {
            json_line(&Line {
                id: &s.id,
                gt: g.format(),
                pred: p.format(),
                recall: recall(g, p),
            })
        })
        .collect();
    ctx.secondary("recall.jsonl", &lines)?;
    ctx.primary("recall.json", &json_line(&summary))
}

fn render(ctx: &Ctx, a: &RenderArgs) -> Result<()> {
    let mut regions: Vec<(String, Region)> = Vec::new();
    let mut side = a.side;
    if let (Some(id), Some(path)) = (&a.id, &a.dataset) {
        let data = load_dataset(path)?;
        let s = data
            .samples
            .iter()
            .find(|s| &s.id == id)
            .ok_or_else(|| HarnessError::Data(format!("no sample `{id}` in {}", path.display())))?;
        side.get_or_insert(s.side);
        if let Some(g) = s.gt()? {
            regions.push(("gt".into(), g));
        }
        if let Some(p) = &a.predictions {
            let preds = Predictions::from_path(p)?;
            if let Some(r) = preds.get(id) {
                regions.push(("pred".into(), r));
            }
        }
    }
    for (i, text) in a.region.iter().enumerate() {
        let label = a.label.get(i).cloned().unwrap_or_else(|| format!("region {}", i + 1));
        regions.push((label, parse_cli_region(text)?));
    }
    let side = side.ok_or_else(|| HarnessError::Config("render needs --side or --dataset with --id".into()))?;
    TokenGrid::single(side)?;
    if regions.is_empty() {
        return Err(HarnessError::Config("nothing to render; pass --region or --id".into()));
    }
    let overlay = Overlay {
        side,
        regions,
        kept: None,
    };
    if let Some(scale) = a.ppm {
        ctx.secondary("render.ppm", &overlay.ppm(scale))?;
    }
    ctx.primary("render.svg", &overlay.svg())
}

fn gen(ctx: &Ctx, a: &GenArgs) -> Result<()> {
    let mut spec = ctx.config.gen;
    if let Some(c) = a.count {
        spec.count = c;
    }
    if let Some(s) = a.side {
        spec.side = s;
    }
    if let Some(v) = a.views {
        spec.views = v;
    }
    if spec.min_dim == 0 || spec.min_dim > spec.max_dim || spec.max_dim > 8 {
        return Err(HarnessError::Config(format!("region dims {}..={} must lie in 1..=8", spec.min_dim, spec.max_dim)));
    }
    TokenGrid::new(spec.side, spec.views).map_err(|e| HarnessError::Config(e.to_string()))?;
    let samples = generate(&spec, ctx.seed);
    let mut buf = Vec::new();
    write_samples(&mut buf, &samples).expect("writing to memory");
    ctx.primary("dataset.jsonl", &String::from_utf8(buf).expect("utf-8 json"))
}

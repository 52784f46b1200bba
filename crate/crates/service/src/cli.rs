//! The `convis` command: batch visualization jobs and the server.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use convis::fixtures;
use convis::net::{load_network, LayerKind};
use convis::regopt::regularizers::zeroed_fraction;
use convis::regopt::{hyperparam_random_search, regularization_sweep, Regularizer, SearchRanges};
use convis::vizdata::{channel_stats, montage, montage_images, to_rgb, topk_scan, write_topk, Dataset};
use convis::{run_optimization, Network, OptRunResult, Preset, RegParams, UnitRef};
use rayon::prelude::*;

use crate::config::Config;
use crate::error::{Result, ServiceError};
use crate::service::{Service, ServiceOptions};
use crate::store::{net_hash, ResultKey, ResultsStore, RESULT_FILE};

#[derive(Debug, Parser)]
#[command(
    name = "convis",
    version,
    about = "Inspect and visualize convolutional network units"
)]
pub struct Cli {
    /// TOML config file (default: ./convis.toml when present).
    #[arg(long, global = true, env = "CONVIS_CONFIG")]
    pub config: Option<PathBuf>,
    /// Weight file; overrides config and CONVIS_NET.
    #[arg(long, global = true)]
    pub net: Option<PathBuf>,
    /// Results directory; overrides config and CONVIS_RESULTS.
    #[arg(long, global = true)]
    pub results: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize preferred images for one unit over several seeds.
    Optimize(OptimizeArgs),
    /// Sweep one regularizer from off to its maximum strength.
    Sweep(SweepArgs),
    /// Random search over regularization settings.
    Search(SearchArgs),
    /// Top-K activating dataset images per channel.
    Topk(TopkArgs),
    /// Mean rectified activation per channel over a dataset.
    Stats(StatsArgs),
    /// Lay out stored results or PNG images on a grid.
    Montage(MontageArgs),
    /// Run the HTTP / WebSocket service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ParamArgs {
    /// Named preset: 1-4 or preset-N.
    #[arg(long, conflicts_with = "params")]
    pub preset: Option<Preset>,
    /// decay,blur_width,blur_every,norm_pct,contrib_pct
    #[arg(long)]
    pub params: Option<String>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ParamArgs {
    pub fn resolve(&self) -> Result<RegParams> {
        let mut p = match (&self.preset, &self.params) {
            (Some(preset), _) => RegParams::preset(*preset),
            (None, Some(text)) => parse_thetas(text)?,
            (None, None) => RegParams::default(),
        };
        if let Some(eta) = self.eta {
            p.eta = eta;
        }
        if let Some(steps) = self.steps {
            p.steps = steps;
        }
        p.seed = self.seed;
        p.validate()?;
        Ok(p)
    }
}

fn parse_thetas(text: &str) -> Result<RegParams> {
    let bad = || ServiceError::BadRequest(format!("--params `{text}`: expected five comma-separated numbers"));
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [d, bw, be, n, c] = parts[..] else {
        return Err(bad());
    };
    let f = |s: &str| s.parse::<f64>().map_err(|_| bad());
    let every = be.parse::<u32>().map_err(|_| bad())?;
    Ok(RegParams::with_thetas(f(d)?, f(bw)?, every, f(n)?, f(c)?)?)
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub unit: UnitRef,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Number of seeds, starting at --seed.
    #[arg(long, default_value_t = 9)]
    pub seeds: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub cols: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value = "fc3:0")]
    pub unit: UnitRef,
    /// decay | blur | norm | contribution
    #[arg(long)]
    pub reg: Regularizer,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value = "sweep")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, default_value = "fc3:0")]
    pub unit: UnitRef,
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    /// Sampler seed.
    #[arg(long = "search-seed", default_value_t = 0)]
    pub search_seed: u64,
    /// TOML file overriding the default search ranges.
    #[arg(long)]
    pub ranges: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
    /// How many of the best results go into the montage.
    #[arg(long, default_value_t = 9)]
    pub top: usize,
    #[arg(long, default_value = "search")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TopkArgs {
    /// Dataset directory with index.csv.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 9)]
    pub k: usize,
    /// Layers whose every channel is ranked (repeatable). Default: every
    /// ReLU layer and the last layer before the softmax.
    #[arg(long)]
    pub layer: Vec<String>,
    /// Explicit units instead of whole layers.
    #[arg(long, value_delimiter = ',')]
    pub units: Vec<UnitRef>,
    /// Site used for whole layers: center or mean.
    #[arg(long, default_value = "mean")]
    pub site: String,
    /// Output CSV; default is the results store, where `serve` finds it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub layer: String,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MontageArgs {
    /// Directory of stored results (searched recursively) or of PNG images.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub cols: usize,
    #[arg(long, default_value_t = 2)]
    pub pad: usize,
    #[arg(long, default_value = "montage.png")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub topk: Option<PathBuf>,
}

/// Config after file, environment and the global flags.
pub fn resolve_config(cli: &Cli) -> Result<Config> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(net) = &cli.net {
        cfg.net = Some(net.clone());
    }
    if let Some(r) = &cli.results {
        cfg.results = r.clone();
    }
    Ok(cfg)
}

pub fn load_net(cfg: &Config) -> Result<Network> {
    match &cfg.net {
        Some(path) => Ok(load_network(path)?),
        None => {
            tracing::info!("no net configured; using the bundled shape classifier");
            Ok(fixtures::fixture_net())
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| ServiceError::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| ServiceError::io(path, e))
}

fn save_montage(results: &[OptRunResult], cols: usize, net: &Network, path: &Path) -> Result<()> {
    montage(results, cols, net.mean(), 2)?
        .save(path)
        .map_err(convis::Error::from)?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    match cli.command {
        Command::Optimize(a) => optimize(&cfg, a),
        Command::Sweep(a) => sweep(&cfg, a),
        Command::Search(a) => search(&cfg, a),
        Command::Topk(a) => topk(&cfg, a),
        Command::Stats(a) => stats(&cfg, a),
        Command::Montage(a) => montage_cmd(&cfg, a),
        Command::Serve(a) => serve(cfg, a),
    }
}

fn optimize(cfg: &Config, a: OptimizeArgs) -> Result<()> {
    let net = load_net(cfg)?;
    let base = a.params.resolve()?;
    let store = ResultsStore::new(&cfg.results);
    let hash = net_hash(&net);
    create_dir(&a.out)?;
    let results = (base.seed..base.seed + a.seeds)
        .into_par_iter()
        .map(|seed| -> Result<OptRunResult> {
            let p = RegParams { seed, ..base.clone() };
            let key = ResultKey::new(&hash, &a.unit, &p);
            if store.contains(&key) {
                return store.load(&key);
            }
            let r = run_optimization(&net, &a.unit, &p)?;
            store.save(&key, &r, net.mean())?;
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    for r in &results {
        println!(
            "{} seed {:3}  activation {:10.4} -> {:10.4}",
            r.unit,
            r.params.seed,
            r.activation_trace.first().copied().unwrap_or(f32::NAN),
            r.final_activation
        );
        to_rgb(&r.final_image, net.mean())?
            .save(a.out.join(format!("seed-{}.png", r.params.seed)))
            .map_err(convis::Error::from)?;
    }
    save_montage(&results, a.cols, &net, &a.out.join("montage.png"))?;
    let summary: Vec<_> = results
        .iter()
        .map(|r| serde_json::json!({ "unit": r.unit, "params": r.params, "final_activation": r.final_activation }))
        .collect();
    write_file(&a.out.join("summary.json"), &serde_json::to_vec_pretty(&summary)?)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn sweep(cfg: &Config, a: SweepArgs) -> Result<()> {
    let net = load_net(cfg)?;
    let base = a.params.resolve()?;
    let results = regularization_sweep(&net, &a.unit, a.reg, a.k, &base)?;
    create_dir(&a.out)?;
    let mut csv = String::from(
        "index,theta_decay,theta_b_width,theta_b_every,theta_n_pct,theta_c_pct,final_activation,zeroed_fraction\n",
    );
    for (i, r) in results.iter().enumerate() {
        let (d, bw, be, n, c) = r.params.thetas();
        let z = zeroed_fraction(&r.final_image)?;
        println!(
            "{i:2}  ({d}, {bw}, {be}, {n}, {c})  activation {:10.4}  zeroed {z:.3}",
            r.final_activation
        );
        csv.push_str(&format!("{i},{d},{bw},{be},{n},{c},{},{z}\n", r.final_activation));
    }
    write_file(&a.out.join("sweep.csv"), csv.as_bytes())?;
    save_montage(&results, a.k, &net, &a.out.join("montage.png"))?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn search(cfg: &Config, a: SearchArgs) -> Result<()> {
    let net = load_net(cfg)?;
    let base = a.params.resolve()?;
    let ranges = match &a.ranges {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| ServiceError::io(path, e))?;
            toml::from_str::<SearchRanges>(&text).map_err(|e| ServiceError::Config(e.to_string()))?
        }
        None => SearchRanges::default(),
    };
    let results = hyperparam_random_search(&net, &a.unit, a.n, &ranges, a.search_seed, &base)?;
    create_dir(&a.out)?;
    let mut csv = String::from(
        "rank,final_activation,eta,theta_decay,theta_b_width,theta_b_every,theta_n_pct,theta_c_pct,seed\n",
    );
    for (i, r) in results.iter().enumerate() {
        let (d, bw, be, n, c) = r.params.thetas();
        csv.push_str(&format!(
            "{i},{},{},{d},{bw},{be},{n},{c},{}\n",
            r.final_activation, r.params.eta, r.params.seed
        ));
    }
    for (i, r) in results.iter().take(5).enumerate() {
        println!(
            "#{i} activation {:10.4} eta {:.4} thetas {:?}",
            r.final_activation,
            r.params.eta,
            r.params.thetas()
        );
    }
    write_file(&a.out.join("search.csv"), csv.as_bytes())?;
    let top = &results[..a.top.clamp(1, results.len())];
    save_montage(
        top,
        (top.len() as f64).sqrt().ceil() as usize,
        &net,
        &a.out.join("montage.png"),
    )?;
    println!("wrote {} ({} runs)", a.out.display(), results.len());
    Ok(())
}

/// Layers ranked by default: every ReLU and the last layer before a softmax.
pub fn default_topk_layers(net: &Network) -> Vec<String> {
    let layers = net.layers();
    let mut out: Vec<String> = layers
        .iter()
        .filter(|l| l.kind == LayerKind::Relu)
        .map(|l| l.name.clone())
        .collect();
    let last = match layers.last().map(|l| &l.kind) {
        Some(LayerKind::Softmax) if layers.len() > 1 => &layers[layers.len() - 2],
        _ => &layers[layers.len() - 1],
    };
    if !out.contains(&last.name) {
        out.push(last.name.clone());
    }
    out
}

fn topk(cfg: &Config, a: TopkArgs) -> Result<()> {
    let net = load_net(cfg)?;
    let units = if a.units.is_empty() {
        let layers = if a.layer.is_empty() {
            default_topk_layers(&net)
        } else {
            a.layer.clone()
        };
        let mut units = Vec::new();
        for name in layers {
            let c = net.output_shape(net.layer_index(&name)?)[0];
            for ch in 0..c {
                units.push(match a.site.as_str() {
                    "mean" => UnitRef::mean(&name, ch),
                    "center" => UnitRef::new(&name, ch),
                    other => return Err(ServiceError::BadRequest(format!("--site `{other}` (center|mean)"))),
                });
            }
        }
        units
    } else {
        a.units.clone()
    };
    let data = Dataset::open(&a.data)?;
    let lists = topk_scan(&net, data.preprocessed(net.mean())?, &units, a.k)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| ResultsStore::new(&cfg.results).topk_path(&net_hash(&net)));
    if let Some(dir) = out.parent() {
        create_dir(dir)?;
    }
    write_topk(&out, &lists)?;
    for l in lists.iter().take(10) {
        let ids: Vec<&str> = l.hits.iter().map(|h| h.image_id.as_str()).collect();
        println!("{}: {}", l.unit, ids.join(" "));
    }
    println!("{} units over {} images -> {}", lists.len(), data.len(), out.display());
    Ok(())
}

fn stats(cfg: &Config, a: StatsArgs) -> Result<()> {
    let net = load_net(cfg)?;
    let data = Dataset::open(&a.data)?;
    let images = data.preprocessed(net.mean())?.into_iter().map(|(_, x)| x);
    let stats = channel_stats(&net, images, &a.layer)?;
    let mut buf = Vec::new();
    stats
        .write_table(&mut buf)
        .map_err(|e| ServiceError::io("<table>", e))?;
    match &a.out {
        Some(path) => write_file(path, &buf)?,
        None => std::io::stdout()
            .write_all(&buf)
            .map_err(|e| ServiceError::io("<stdout>", e))?,
    }
    Ok(())
}

fn collect_results(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| ServiceError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_results(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == RESULT_FILE) {
            out.push(p);
        }
    }
    Ok(())
}

fn montage_cmd(cfg: &Config, a: MontageArgs) -> Result<()> {
    let mut files = Vec::new();
    collect_results(&a.input, &mut files)?;
    let img = if files.is_empty() {
        let mut pngs: Vec<PathBuf> = std::fs::read_dir(&a.input)
            .map_err(|e| ServiceError::io(&a.input, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "png") && *p != a.out)
            .filter(|p| {
                !p.file_stem()
                    .is_some_and(|s| s.to_string_lossy().starts_with("montage"))
            })
            .collect();
        pngs.sort();
        if pngs.is_empty() {
            return Err(ServiceError::NotFound(format!(
                "no results or PNG images under {}",
                a.input.display()
            )));
        }
        let images = pngs
            .iter()
            .map(|p| Ok(image::open(p).map_err(convis::Error::from)?.to_rgb8()))
            .collect::<Result<Vec<_>>>()?;
        if images.iter().any(|i| i.dimensions() != images[0].dimensions()) {
            return Err(ServiceError::BadRequest("montage images differ in size".into()));
        }
        montage_images(&images, a.cols, a.pad)
    } else {
        let net = load_net(cfg)?;
        let results = files
            .iter()
            .map(|p| {
                let bytes = std::fs::read(p).map_err(|e| ServiceError::io(p, e))?;
                Ok(serde_json::from_slice::<OptRunResult>(&bytes)?)
            })
            .collect::<Result<Vec<_>>>()?;
        montage(&results, a.cols, net.mean(), a.pad)?
    };
    img.save(&a.out).map_err(convis::Error::from)?;
    println!("wrote {} ({}x{})", a.out.display(), img.width(), img.height());
    Ok(())
}

fn serve(mut cfg: Config, a: ServeArgs) -> Result<()> {
    if let Some(p) = a.port {
        cfg.port = p;
    }
    if let Some(b) = a.bind {
        cfg.bind = b;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if a.data.is_some() {
        cfg.data = a.data;
    }
    if a.topk.is_some() {
        cfg.topk = a.topk;
    }
    let net = load_net(&cfg)?;
    let svc = Service::new(net, ServiceOptions::from(&cfg))?;
    let addr: std::net::SocketAddr = format!("{}:{}", cfg.bind, cfg.port)
        .parse()
        .map_err(|e| ServiceError::Config(format!("bind address: {e}")))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| ServiceError::io("<runtime>", e))?;
    rt.block_on(crate::http::serve(svc, addr))
        .map_err(|e| ServiceError::io(addr.to_string(), e))
}

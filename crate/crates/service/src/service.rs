//! The service facade: everything the HTTP layer and the tests call.

use std::sync::{Arc, RwLock};
use std::time::Duration;

use convis::net::LayerKind;
use convis::vizdata::{
    montage, png_bytes_rgb, preprocess, preprocess_bytes, read_topk, Dataset, DisplayNorm, GridLayout, TopKEntry,
};
use convis::{backward, forward, BackwardMode, Network, Preset, RegParams, Tensor, UnitRef};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::events::{Event, Events};
use crate::jobs::{JobPool, JobState, OptJob};
use crate::render::{channel_png, channel_summaries, diff_png, layer_png, ChannelSummary};
use crate::session::{FrameAck, Session, Sessions};
use crate::store::{net_hash, ResultKey, ResultMeta, ResultsStore, IMAGE_FILE};

#[derive(Clone, Debug)]
pub struct ServiceOptions {
    pub results: std::path::PathBuf,
    pub workers: usize,
    pub session_idle: Duration,
    pub topk: Option<std::path::PathBuf>,
    pub data: Option<std::path::PathBuf>,
}

impl ServiceOptions {
    pub fn new(results: impl Into<std::path::PathBuf>) -> Self {
        ServiceOptions {
            results: results.into(),
            workers: 2,
            session_idle: Duration::from_secs(30 * 60),
            topk: None,
            data: None,
        }
    }
}

impl From<&crate::config::Config> for ServiceOptions {
    fn from(c: &crate::config::Config) -> Self {
        ServiceOptions {
            results: c.results.clone(),
            workers: c.workers,
            session_idle: c.session_idle(),
            topk: c.topk.clone(),
            data: c.data.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LayerSummary {
    pub name: String,
    pub kind: &'static str,
    pub output: [usize; 3],
}

#[derive(Clone, Debug, Serialize)]
pub struct NetSummary {
    pub name: String,
    pub hash: String,
    pub input: [usize; 3],
    pub parameter_count: usize,
    pub layers: Vec<LayerSummary>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default)]
pub struct ViewOptions {
    /// Last frame counter the client has; the response says if it is newer.
    pub since: Option<u64>,
    pub mode: DisplayNorm,
    pub pad: Option<usize>,
}

/// Layer view metadata; the PNG itself is fetched from `image`.
#[derive(Clone, Debug, Serialize)]
pub struct LayerView {
    pub session: String,
    pub layer: String,
    pub frame: u64,
    pub newer: bool,
    pub shape: [usize; 3],
    /// `None` for vector layers, drawn as a heat strip.
    pub grid: Option<GridLayout>,
    pub mode: DisplayNorm,
    pub channels: Vec<ChannelSummary>,
    pub image: String,
    #[serde(skip)]
    pub png: Vec<u8>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Selection {
    pub session: String,
    pub unit: UnitRef,
    pub frame: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AscentPanel {
    pub result: ResultMeta,
    pub image: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct TopKPanel {
    pub entry: TopKEntry,
    /// Deconv renderings per hit; present when a dataset is configured.
    pub deconv: Option<Vec<String>>,
}

/// Everything the selected-unit panes show. Optional panels are `None`
/// and listed in `absent` when no precomputed assets exist.
#[derive(Clone, Debug, Serialize)]
pub struct PanelBundle {
    pub session: String,
    pub frame: u64,
    pub unit: UnitRef,
    pub activation: f32,
    pub channel_image: String,
    pub deconv_image: String,
    pub gradient_image: String,
    pub ascent: Option<Vec<AscentPanel>>,
    pub topk: Option<TopKPanel>,
    pub absent: Vec<&'static str>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobRequest {
    /// `LAYER:CHANNEL[@ROW,COL|:mean]`.
    pub unit: String,
    pub preset: Option<String>,
    pub params: Option<RegParams>,
    pub steps: Option<usize>,
    pub eta: Option<f64>,
    pub seed: Option<u64>,
    /// Number of consecutive seeds from `seed`; default 1.
    pub seeds: Option<usize>,
}

impl JobRequest {
    pub fn resolve(&self) -> Result<(UnitRef, RegParams, Vec<u64>)> {
        let unit: UnitRef = self.unit.parse()?;
        let mut params = match (&self.preset, &self.params) {
            (Some(_), Some(_)) => {
                return Err(ServiceError::BadRequest(
                    "give either `preset` or `params`, not both".into(),
                ))
            }
            (Some(name), None) => RegParams::preset(name.parse::<Preset>()?),
            (None, Some(p)) => p.clone(),
            (None, None) => RegParams::default(),
        };
        if let Some(steps) = self.steps {
            params.steps = steps;
        }
        if let Some(eta) = self.eta {
            params.eta = eta;
        }
        let first = self.seed.unwrap_or(params.seed);
        params.seed = first;
        let n = self.seeds.unwrap_or(1) as u64;
        if n == 0 || n > 64 {
            return Err(ServiceError::BadRequest("`seeds` must be in 1..=64".into()));
        }
        Ok((unit, params, (first..first + n).collect()))
    }
}

pub struct Service {
    net: Arc<Network>,
    net_hash: String,
    store: ResultsStore,
    sessions: Sessions,
    jobs: JobPool,
    topk: RwLock<Vec<TopKEntry>>,
    dataset: Option<Dataset>,
    events: Events,
    idle: Duration,
}

fn session_url(id: &str) -> String {
    format!("/session/{id}")
}

impl Service {
    pub fn new(net: Network, opts: ServiceOptions) -> Result<Arc<Self>> {
        let net = Arc::new(net);
        let hash = net_hash(&net);
        let store = ResultsStore::new(&opts.results);
        let events = Events::new(256);
        let topk_path = opts.topk.clone().unwrap_or_else(|| store.topk_path(&hash));
        let topk = if topk_path.is_file() {
            read_topk(&topk_path)?
        } else if opts.topk.is_some() {
            return Err(ServiceError::NotFound(format!("top-K file {}", topk_path.display())));
        } else {
            Vec::new()
        };
        let dataset = opts.data.as_ref().map(Dataset::open).transpose()?;
        let jobs = JobPool::new(
            opts.workers,
            Arc::clone(&net),
            hash.clone(),
            store.clone(),
            events.clone(),
        );
        Ok(Arc::new(Service {
            net,
            net_hash: hash,
            store,
            sessions: Sessions::default(),
            jobs,
            topk: RwLock::new(topk),
            dataset,
            events,
            idle: opts.session_idle,
        }))
    }

    pub fn net(&self) -> &Network {
        &self.net
    }

    pub fn net_hash(&self) -> &str {
        &self.net_hash
    }

    pub fn store(&self) -> &ResultsStore {
        &self.store
    }

    pub fn events(&self) -> &Events {
        &self.events
    }

    pub fn net_summary(&self) -> NetSummary {
        let net = &self.net;
        NetSummary {
            name: net.spec().name.clone(),
            hash: self.net_hash.clone(),
            input: net.input_shape(),
            parameter_count: net.parameter_count(),
            layers: net
                .layers()
                .iter()
                .enumerate()
                .map(|(i, l)| LayerSummary {
                    name: l.name.clone(),
                    kind: l.kind.name(),
                    output: net.output_shape(i),
                })
                .collect(),
        }
    }

    pub fn create_session(&self) -> Result<Selection> {
        let s = self.sessions.create(&self.net)?;
        let last = self.net.layers().len() - 1;
        Ok(Selection {
            session: s.id().to_string(),
            unit: UnitRef::new(&self.net.layers()[last].name, 0),
            frame: 0,
        })
    }

    pub fn session(&self, id: &str) -> Result<Arc<Session>> {
        self.sessions.get(id)
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    /// Decodes, preprocesses and runs an encoded image. A bad image leaves
    /// the session untouched.
    pub fn submit_frame(&self, id: &str, bytes: &[u8]) -> Result<FrameAck> {
        let session = self.sessions.get(id)?;
        let x =
            preprocess_bytes(bytes, self.net.mean()).map_err(|e| ServiceError::BadRequest(format!("frame: {e}")))?;
        self.publish_frame(&session, x)
    }

    pub fn submit_image(&self, id: &str, image: &image::DynamicImage) -> Result<FrameAck> {
        let session = self.sessions.get(id)?;
        let x = preprocess(image, self.net.mean())?;
        self.publish_frame(&session, x)
    }

    fn publish_frame(&self, session: &Session, x: Tensor) -> Result<FrameAck> {
        let ack = session.submit(&self.net, x)?;
        if !ack.superseded {
            self.events.send(Event::Frame {
                session: session.id().to_string(),
                frame: ack.frame,
            });
        }
        Ok(ack)
    }

    pub fn layer_view(&self, id: &str, layer: &str, opts: &ViewOptions) -> Result<LayerView> {
        let frame = self.sessions.get(id)?.frame();
        let li = self.net.layer_index(layer)?;
        let t = frame.acts.output(li);
        let (png, grid) = layer_png(t, opts.pad.unwrap_or(1), opts.mode)?;
        Ok(LayerView {
            session: id.to_string(),
            layer: layer.to_string(),
            frame: frame.counter,
            newer: opts.since.is_none_or(|s| frame.counter > s),
            shape: self.net.output_shape(li),
            grid,
            mode: opts.mode,
            channels: channel_summaries(t),
            image: format!("{}/layer/{layer}?format=png&frame={}", session_url(id), frame.counter),
            png,
        })
    }

    fn check_unit(&self, unit: &UnitRef) -> Result<usize> {
        let li = self.net.layer_index(&unit.layer)?;
        unit.position(&self.net.output_shape(li))?;
        Ok(li)
    }

    pub fn select(&self, id: &str, unit: UnitRef) -> Result<Selection> {
        let session = self.sessions.get(id)?;
        self.check_unit(&unit)?;
        session.select(unit.clone());
        let frame = session.frame().counter;
        self.events.send(Event::Selected {
            session: id.to_string(),
            unit: unit.to_string(),
            frame,
        });
        Ok(Selection {
            session: id.to_string(),
            unit,
            frame,
        })
    }

    /// The unit at `site`, or at the channel's maximum in the current frame.
    fn panel_unit(
        &self,
        frame_acts: &convis::net::ActivationMap,
        layer: &str,
        channel: usize,
        site: Option<(usize, usize)>,
    ) -> Result<UnitRef> {
        let unit = match site {
            Some((r, c)) => UnitRef::at(layer, channel, r, c),
            None => {
                let t = frame_acts.get(layer)?;
                UnitRef::new(layer, channel).position(t.shape())?;
                let (h, w) = (t.shape()[1], t.shape()[2]);
                let plane = &t.data()[channel * h * w..(channel + 1) * h * w];
                let best = plane
                    .iter()
                    .enumerate()
                    .fold(0, |b, (i, &v)| if v > plane[b] { i } else { b });
                UnitRef::at(layer, channel, best / w, best % w)
            }
        };
        self.check_unit(&unit)?;
        Ok(unit)
    }

    pub fn unit_panels(
        &self,
        id: &str,
        layer: &str,
        channel: usize,
        site: Option<(usize, usize)>,
    ) -> Result<PanelBundle> {
        let frame = self.sessions.get(id)?.frame();
        let unit = self.panel_unit(&frame.acts, layer, channel, site)?;
        let activation = convis::unit_activation(&frame.acts, &unit)?;
        let base = format!("{}/unit/{layer}/{channel}", session_url(id));
        let at = match unit.site {
            convis::net::Site::At { row, col } => format!("&row={row}&col={col}"),
            _ => String::new(),
        };
        let mut absent = Vec::new();

        let ascent = self.store.list_channel(&self.net_hash, layer, channel)?;
        let ascent = if ascent.is_empty() {
            absent.push("ascent");
            None
        } else {
            Some(
                ascent
                    .into_iter()
                    .map(|m| AscentPanel {
                        image: format!("/results/{}/{IMAGE_FILE}", m.key.path()),
                        result: m,
                    })
                    .collect(),
            )
        };
        let topk = match self.topk_entry(layer, channel) {
            Ok(entry) => {
                let deconv = self.dataset.as_ref().map(|_| {
                    (0..entry.hits.len())
                        .map(|r| format!("/topk/{layer}/{channel}/deconv/{r}"))
                        .collect()
                });
                Some(TopKPanel { entry, deconv })
            }
            Err(ServiceError::NotFound(_)) => {
                absent.push("topk");
                None
            }
            Err(e) => return Err(e),
        };
        Ok(PanelBundle {
            session: id.to_string(),
            frame: frame.counter,
            activation,
            channel_image: format!("{base}/activation?frame={}", frame.counter),
            deconv_image: format!("{base}/backward?mode=deconv&frame={}{at}", frame.counter),
            gradient_image: format!("{base}/backward?mode=gradient&frame={}{at}", frame.counter),
            unit,
            ascent,
            topk,
            absent,
        })
    }

    /// Enlarged channel map of the current frame, with its counter.
    pub fn channel_image(&self, id: &str, layer: &str, channel: usize) -> Result<(u64, Vec<u8>)> {
        let frame = self.sessions.get(id)?.frame();
        let t = frame.acts.get(layer)?;
        UnitRef::new(layer, channel).position(t.shape())?;
        Ok((frame.counter, channel_png(t, channel)?))
    }

    /// Input-space diff for a unit of the current frame.
    pub fn backward_diff(
        &self,
        id: &str,
        layer: &str,
        channel: usize,
        site: Option<(usize, usize)>,
        mode: BackwardMode,
    ) -> Result<(u64, Tensor)> {
        let frame = self.sessions.get(id)?.frame();
        let unit = self.panel_unit(&frame.acts, layer, channel, site)?;
        Ok((frame.counter, backward(&self.net, &frame.acts, &unit, mode)?))
    }

    pub fn backward_image(
        &self,
        id: &str,
        layer: &str,
        channel: usize,
        site: Option<(usize, usize)>,
        mode: BackwardMode,
    ) -> Result<(u64, Vec<u8>)> {
        let (counter, d) = self.backward_diff(id, layer, channel, site, mode)?;
        Ok((counter, diff_png(&d)?))
    }

    pub fn start_job(&self, req: &JobRequest) -> Result<String> {
        let (unit, params, seeds) = req.resolve()?;
        self.check_unit(&unit)?;
        if let LayerKind::Softmax = self.net.layers()[self.net.layer_index(&unit.layer)?].kind {
            return Err(ServiceError::BadRequest(
                "cannot optimize a softmax output; use the layer before it".into(),
            ));
        }
        self.jobs.submit(unit, params, seeds)
    }

    pub fn job(&self, id: &str) -> Result<OptJob> {
        self.jobs.get(id)
    }

    /// Polls until the job leaves the queue and finishes.
    pub fn wait_job(&self, id: &str, timeout: Duration) -> Result<OptJob> {
        let start = std::time::Instant::now();
        loop {
            let job = self.job(id)?;
            if matches!(job.state, JobState::Done | JobState::Failed) || start.elapsed() > timeout {
                return Ok(job);
            }
            std::thread::sleep(Duration::from_millis(10));
        }
    }

    pub fn job_montage(&self, id: &str) -> Result<Vec<u8>> {
        let job = self.job(id)?;
        if job.state != JobState::Done {
            return Err(ServiceError::NotFound(format!(
                "job `{id}` has no result yet ({:?})",
                job.state
            )));
        }
        let results = job
            .results
            .iter()
            .map(|m| self.store.load(&m.key))
            .collect::<Result<Vec<_>>>()?;
        let cols = (results.len() as f64).sqrt().ceil() as usize;
        Ok(png_bytes_rgb(&montage(&results, cols, self.net.mean(), 2)?)?)
    }

    pub fn result_file(&self, key: &ResultKey, file: &str) -> Result<Vec<u8>> {
        self.store.read(key, file)
    }

    pub fn set_topk(&self, lists: Vec<TopKEntry>) {
        *self.topk.write().expect("topk lock") = lists;
    }

    pub fn topk_entry(&self, layer: &str, channel: usize) -> Result<TopKEntry> {
        self.topk
            .read()
            .expect("topk lock")
            .iter()
            .find(|e| e.unit.layer == layer && e.unit.channel == channel)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("top-K list for {layer}:{channel}")))
    }

    /// Deconv of one top-K hit, started at the hit's argmax position.
    pub fn topk_deconv(&self, layer: &str, channel: usize, rank: usize) -> Result<Vec<u8>> {
        let data = self
            .dataset
            .as_ref()
            .ok_or_else(|| ServiceError::NotFound("no dataset configured".into()))?;
        let entry = self.topk_entry(layer, channel)?;
        let hit = entry
            .hits
            .get(rank)
            .ok_or_else(|| ServiceError::NotFound(format!("rank {rank} of {layer}:{channel}")))?;
        let record = data
            .entries()
            .iter()
            .find(|e| e.id == hit.image_id)
            .ok_or_else(|| ServiceError::NotFound(format!("image `{}` in dataset", hit.image_id)))?;
        let x = preprocess(&data.load(record)?, self.net.mean())?;
        let acts = forward(&self.net, &x)?;
        let unit = UnitRef::at(layer, channel, hit.argmax.0, hit.argmax.1);
        diff_png(&backward(&self.net, &acts, &unit, BackwardMode::Deconv)?)
    }

    pub fn evict_idle(&self) -> usize {
        self.sessions.evict_idle(self.idle)
    }
}

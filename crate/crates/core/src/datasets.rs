//! KITTI-FC and GoPro-FC construction from the original dataset layouts.
//!
//! KITTI 2015: `<root>/image_2/{id}_10.png`, `{id}_11.png` and ground truth
//! `<root>/flow_occ/{id}_10.png` (a `training/` level is also accepted).
//! GoPro: `<root>/<sequence>/sharp/*.png` (or the frames directly in
//! `<root>/<sequence>/`) at 240 fps, plus optional 960 fps frames in
//! `<frames_4x>/<sequence>/*.png`.
//!
//! Generation is idempotent: each cell directory keeps a `cell.json` with a
//! fingerprint of the settings and the SHA-256 of every file written, and a
//! rerun skips files whose recorded hash still matches.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corruption::{CorruptionKind, Severity};
use crate::error::{Error, Result};
use crate::image::{Image, ImagePair};
use crate::ladders::OBJECT_MOTION_HALF_WIDTH;
use crate::manifest::{
    cell_dir, corrupted_rel_path, Benchmark, BenchmarkManifest, Cell, Frame, PairRecord, Split, VideoRunRecord,
    MANIFEST_SCHEMA_VERSION,
};
use crate::pipeline::{corrupt_pair, CorruptionContext, PsfSource};
use crate::psf;
use crate::video::{self, Encoder, FrameSource, PAIR_STRIDE, STREAM_FPS};

pub const KITTI_TRAIN_PAIRS: usize = 120;
pub const KITTI_TIMESTAMP_GAP: f64 = 0.1;
pub const GOPRO_SEQUENCES: [&str; 5] = [
    "GOPR0374_11_02",
    "GOPR0379_11_00",
    "GOPR0384_11_02",
    "GOPR0385_11_00",
    "GOPR0386_11_00",
];
/// Upsampling factor from the 240 fps captures to the 960 fps stream.
pub const INTERP_FACTOR: usize = 4;
pub const GOPRO_TIMESTAMP_GAP: f64 = PAIR_STRIDE as f64 / STREAM_FPS as f64;

const IN_PROGRESS_MARKER: &str = ".flowcorrupt-in-progress";
const CELL_FILE: &str = "cell.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// KITTI

fn kitti_base(root: &Path) -> PathBuf {
    let nested = root.join("training");
    if !root.join("image_2").is_dir() && nested.join("image_2").is_dir() {
        nested
    } else {
        root.to_path_buf()
    }
}

/// All KITTI pairs under `root`, sorted by id, with ground truth.
pub fn discover_kitti(root: impl AsRef<Path>) -> Result<Vec<PairRecord>> {
    let base = kitti_base(root.as_ref());
    let images = base.join("image_2");
    let flows = base.join("flow_occ");
    let mut ids = BTreeSet::new();
    for dir in [&images, &flows] {
        let entries = match fs::read_dir(dir) {
            Ok(e) => e,
            Err(_) => continue,
        };
        for e in entries.flatten() {
            let name = e.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix("_10.png") {
                ids.insert(id.to_string());
            }
        }
    }
    if ids.is_empty() {
        return Err(Error::MissingInputs(vec![images, flows]));
    }
    let mut missing = Vec::new();
    let mut pairs = Vec::with_capacity(ids.len());
    for id in ids {
        let frame_a = images.join(format!("{id}_10.png"));
        let frame_b = images.join(format!("{id}_11.png"));
        let gt = flows.join(format!("{id}_10.png"));
        for p in [&frame_a, &frame_b, &gt] {
            if !p.is_file() {
                missing.push(p.clone());
            }
        }
        pairs.push(PairRecord {
            pair_id: format!("{id}_10"),
            frame_a,
            frame_b,
            ground_truth: Some(gt),
            timestamp_gap: KITTI_TIMESTAMP_GAP,
            sequence: None,
            stream_indices: None,
        });
    }
    if !missing.is_empty() {
        return Err(Error::MissingInputs(missing));
    }
    Ok(pairs)
}

/// First 120 pairs by id train, the rest evaluate.
pub fn kitti_split(mut pairs: Vec<PairRecord>, split: Split) -> Vec<PairRecord> {
    pairs.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    let cut = KITTI_TRAIN_PAIRS.min(pairs.len());
    match split {
        Split::Train => pairs.truncate(cut),
        Split::Eval => {
            pairs.drain(..cut);
        }
    }
    pairs
}

// ---------------------------------------------------------------------------
// GoPro

fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

fn gopro_frame_dir(root: &Path, seq: &str) -> Option<PathBuf> {
    [
        root.join(seq).join("sharp"),
        root.join(seq),
        root.join("test").join(seq).join("sharp"),
    ]
    .into_iter()
    .find(|d| d.is_dir() && list_pngs(d).is_ok_and(|f| !f.is_empty()))
}

/// The 960 fps stream of one sequence, read from disk or interpolated on demand.
pub struct StreamSource {
    originals: Vec<PathBuf>,
    high_rate: Option<Vec<PathBuf>>,
    dims: (usize, usize),
    cache: Mutex<VecDeque<(usize, Arc<Image>)>>,
}

const STREAM_CACHE: usize = 24;

impl StreamSource {
    pub fn new(originals: Vec<PathBuf>, high_rate: Option<Vec<PathBuf>>) -> Result<Self> {
        let first = high_rate
            .as_ref()
            .and_then(|h| h.first())
            .or(originals.first())
            .ok_or_else(|| Error::InvalidImage("empty frame sequence".into()))?;
        let (w, h) = image::image_dimensions(first).map_err(Error::from)?;
        Ok(Self {
            originals,
            high_rate,
            dims: (w as usize, h as usize),
            cache: Mutex::new(VecDeque::new()),
        })
    }

    pub fn is_interpolated(&self) -> bool {
        self.high_rate.is_none()
    }

    /// File holding stream frame `i`, when it exists on disk.
    pub fn frame_path(&self, i: usize) -> Option<&Path> {
        match &self.high_rate {
            Some(h) => h.get(i).map(PathBuf::as_path),
            None if i.is_multiple_of(INTERP_FACTOR) => self.originals.get(i / INTERP_FACTOR).map(PathBuf::as_path),
            None => None,
        }
    }

    fn load(&self, key: usize, path: &Path) -> Result<Arc<Image>> {
        {
            let cache = self.cache.lock().expect("stream cache poisoned");
            if let Some((_, img)) = cache.iter().find(|(k, _)| *k == key) {
                return Ok(img.clone());
            }
        }
        let img = Arc::new(Image::load(path)?);
        if img.dims() != self.dims {
            return Err(Error::DimensionMismatch(format!(
                "{} is {:?}, sequence is {:?}",
                path.display(),
                img.dims(),
                self.dims
            )));
        }
        let mut cache = self.cache.lock().expect("stream cache poisoned");
        cache.push_back((key, img.clone()));
        if cache.len() > STREAM_CACHE {
            cache.pop_front();
        }
        Ok(img)
    }
}

/// Naive 4x interpolation: linear blends between consecutive captures.
pub fn naive_interpolate(a: &Image, b: &Image, step: usize) -> Image {
    if step == 0 {
        return a.clone();
    }
    let t = step as f32 / INTERP_FACTOR as f32;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + (y - x) * t).collect();
    Image::new(a.width(), a.height(), data).expect("same-sized frames")
}

impl FrameSource for StreamSource {
    fn len(&self) -> usize {
        match &self.high_rate {
            Some(h) => h.len(),
            None if self.originals.is_empty() => 0,
            None => INTERP_FACTOR * (self.originals.len() - 1) + 1,
        }
    }

    fn dims(&self) -> (usize, usize) {
        self.dims
    }

    fn frame(&self, i: usize) -> Result<Image> {
        let len = FrameSource::len(self);
        if i >= len {
            return Err(Error::IndexOutOfBounds { index: i, len });
        }
        match &self.high_rate {
            Some(h) => Ok((*self.load(i, &h[i])?).clone()),
            None => {
                let (j, r) = (i / INTERP_FACTOR, i % INTERP_FACTOR);
                let a = self.load(j, &self.originals[j])?;
                if r == 0 {
                    return Ok((*a).clone());
                }
                let b = self.load(j + 1, &self.originals[j + 1])?;
                Ok(naive_interpolate(&a, &b, r))
            }
        }
    }
}

pub struct GoproSequence {
    pub name: String,
    pub stream: StreamSource,
}

/// Locates the named sequences and their optional 960 fps frames.
pub fn discover_gopro(root: &Path, frames_4x: Option<&Path>, names: &[String]) -> Result<Vec<GoproSequence>> {
    let mut missing = Vec::new();
    let mut out = Vec::new();
    for name in names {
        let Some(dir) = gopro_frame_dir(root, name) else {
            missing.push(root.join(name));
            continue;
        };
        let originals = list_pngs(&dir)?;
        let high_rate = match frames_4x {
            Some(d) => {
                let sd = d.join(name);
                match list_pngs(&sd) {
                    Ok(f) if !f.is_empty() => Some(f),
                    _ => {
                        missing.push(sd);
                        continue;
                    }
                }
            }
            None => None,
        };
        out.push(GoproSequence {
            name: name.clone(),
            stream: StreamSource::new(originals, high_rate)?,
        });
    }
    if !missing.is_empty() {
        return Err(Error::MissingInputs(missing));
    }
    Ok(out)
}

fn gopro_pairs(seq: &GoproSequence) -> Vec<PairRecord> {
    video::pair_indices(seq.stream.len())
        .into_iter()
        .enumerate()
        .map(|(k, (a, b))| {
            let path = |i: usize| {
                seq.stream
                    .frame_path(i)
                    .map(Path::to_path_buf)
                    .expect("pair frames fall on stored frames")
            };
            PairRecord {
                pair_id: format!("{}_{k:03}", seq.name),
                frame_a: path(a),
                frame_b: path(b),
                ground_truth: None,
                timestamp_gap: GOPRO_TIMESTAMP_GAP,
                sequence: Some(seq.name.clone()),
                stream_indices: Some((a, b)),
            }
        })
        .collect()
}

/// Mean of the stream frames `keyframe ± half_width`, replicating the first or
/// last frame where the window runs past the stream.
pub fn accumulate_clamped(
    source: &dyn FrameSource,
    keyframe: usize,
    half_width: usize,
    cache: &mut HashMap<usize, Image>,
) -> Result<Image> {
    let len = source.len();
    let mut acc: Option<Vec<f64>> = None;
    for offset in -(half_width as isize)..=half_width as isize {
        let i = (keyframe as isize + offset).clamp(0, len as isize - 1) as usize;
        if let std::collections::hash_map::Entry::Vacant(e) = cache.entry(i) {
            e.insert(source.frame(i)?);
        }
        let f = &cache[&i];
        let acc = acc.get_or_insert_with(|| vec![0f64; f.data().len()]);
        for (a, &v) in acc.iter_mut().zip(f.data()) {
            *a += v as f64;
        }
    }
    let n = (2 * half_width + 1) as f64;
    let (w, h) = source.dims();
    Image::new(
        w,
        h,
        acc.expect("non-empty window")
            .into_iter()
            .map(|v| (v / n) as f32)
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// Generation

#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    /// Restrict to these kinds; `None` builds the full set.
    pub kinds: Option<Vec<CorruptionKind>>,
    /// Restrict to these severities; empty means all five.
    pub severities: Vec<Severity>,
    pub jobs: Option<usize>,
    pub force: bool,
    pub resume: bool,
    pub encoder: Option<PathBuf>,
    pub psf_source: PsfSource,
    /// Allow naive 4x interpolation when no 960 fps frames are given.
    pub naive_interp: bool,
    /// GoPro sequences to include; `None` means all five.
    pub sequences: Option<Vec<String>>,
    /// Written verbatim into the manifest.
    pub run_config: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub manifest: BenchmarkManifest,
    pub manifest_path: PathBuf,
    pub generated_files: usize,
    pub skipped_files: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct CellRecord {
    fingerprint: String,
    files: BTreeMap<String, [String; 2]>,
    #[serde(default)]
    video_runs: Vec<VideoRunRecord>,
}

fn read_cell_record(out: &Path, cell: Cell) -> Option<CellRecord> {
    let text = fs::read_to_string(out.join(cell_dir(cell.kind, cell.severity)).join(CELL_FILE)).ok()?;
    serde_json::from_str(&text).ok()
}

fn write_cell_record(out: &Path, cell: Cell, rec: &CellRecord) -> Result<()> {
    let dir = out.join(cell_dir(cell.kind, cell.severity));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join(CELL_FILE);
    let mut text = serde_json::to_string_pretty(rec)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

struct Plan<'a> {
    benchmark: Benchmark,
    split: Option<Split>,
    out: &'a Path,
    global_seed: u64,
    opts: &'a BuildOptions,
    cells: Vec<Cell>,
    pairs: Vec<PairRecord>,
    sequences: Vec<GoproSequence>,
}

fn selected_cells(benchmark: Benchmark, opts: &BuildOptions) -> Result<Vec<Cell>> {
    let set = benchmark.corruption_set();
    let kinds = match &opts.kinds {
        Some(k) => {
            if let Some(bad) = k.iter().find(|k| !set.contains(k)) {
                return Err(Error::Usage(format!(
                    "{bad} is not part of {benchmark}; valid kinds: {}",
                    set.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
                )));
            }
            k.clone()
        }
        None => set,
    };
    let severities = if opts.severities.is_empty() {
        Severity::ALL.to_vec()
    } else {
        opts.severities.clone()
    };
    let mut cells: Vec<Cell> = kinds
        .iter()
        .flat_map(|&kind| severities.iter().map(move |&severity| Cell { kind, severity }))
        .collect();
    cells.sort();
    cells.dedup();
    Ok(cells)
}

fn psf_identity(source: &PsfSource, severity: Severity) -> Result<String> {
    Ok(match source {
        PsfSource::Bundled => format!("bundled:{}", sha256_hex(&psf::bundled_psf_grid(severity).to_bytes())),
        PsfSource::Dir(dir) => {
            let path = dir.join(psf::lens_file_name(severity));
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            format!("file:{}", sha256_hex(&bytes))
        }
    })
}

fn psf_description(source: &PsfSource) -> String {
    match source {
        PsfSource::Bundled => "bundled".into(),
        PsfSource::Dir(d) => d.display().to_string(),
    }
}

impl Plan<'_> {
    fn fingerprint(&self, cell: Cell, encoder: Option<&Encoder>, interpolated: bool) -> Result<String> {
        let mut parts = vec![
            format!("schema={MANIFEST_SCHEMA_VERSION}"),
            format!("benchmark={}", self.benchmark),
            format!("split={:?}", self.split),
            format!("seed={}", self.global_seed),
            format!("kind={}", cell.kind.name()),
            format!("severity={}", cell.severity),
        ];
        if cell.kind == CorruptionKind::PsfBlur {
            parts.push(format!("psf={}", psf_identity(&self.opts.psf_source, cell.severity)?));
        }
        if cell.kind.needs_stream() {
            parts.push(format!("interpolated={interpolated}"));
        }
        if matches!(
            cell.kind,
            CorruptionKind::H264Crf | CorruptionKind::H264Abr | CorruptionKind::BitError
        ) {
            parts.push(format!("encoder={}", encoder.map(|e| e.version.as_str()).unwrap_or("")));
        }
        Ok(sha256_hex(parts.join("\n").as_bytes()))
    }

    fn sequence(&self, name: &str) -> Option<&GoproSequence> {
        self.sequences.iter().find(|s| s.name == name)
    }
}

fn is_video(kind: CorruptionKind) -> bool {
    matches!(
        kind,
        CorruptionKind::H264Crf | CorruptionKind::H264Abr | CorruptionKind::BitError
    )
}

fn file_matches(path: &Path, hash: &str) -> bool {
    fs::read(path).is_ok_and(|b| sha256_hex(&b) == hash)
}

fn write_pair(out: &Path, cell: Cell, pair: &ImagePair) -> Result<[String; 2]> {
    let mut hashes = [String::new(), String::new()];
    for (i, (frame, img)) in [(Frame::A, &pair.frame_a), (Frame::B, &pair.frame_b)]
        .into_iter()
        .enumerate()
    {
        let path = out.join(corrupted_rel_path(cell.kind, cell.severity, &pair.pair_id, frame));
        let dir = path.parent().expect("nested path");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let bytes = img.encode_png()?;
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        hashes[i] = sha256_hex(&bytes);
    }
    Ok(hashes)
}

type CellFiles = BTreeMap<Cell, BTreeMap<String, [String; 2]>>;

fn run(plan: Plan<'_>) -> Result<BuildOutcome> {
    let out = plan.out;
    let opts = plan.opts;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let marker = out.join(IN_PROGRESS_MARKER);
    if marker.exists() && !opts.resume && !opts.force {
        return Err(Error::Usage(format!(
            "{} holds an unfinished run; rerun with --resume to continue it or --force to regenerate everything",
            out.display()
        )));
    }

    let wants_video = plan.cells.iter().any(|c| is_video(c.kind));
    let encoder = if wants_video {
        Some(Encoder::locate(opts.encoder.as_deref())?)
    } else {
        None
    };
    let interpolated = plan.sequences.iter().any(|s| s.stream.is_interpolated());
    let mut fingerprints = BTreeMap::new();
    for &cell in &plan.cells {
        fingerprints.insert(cell, plan.fingerprint(cell, encoder.as_ref(), interpolated)?);
    }
    let previous: BTreeMap<Cell, CellRecord> = if opts.force {
        BTreeMap::new()
    } else {
        plan.cells
            .iter()
            .filter_map(|&c| {
                read_cell_record(out, c)
                    .filter(|r| r.fingerprint == fingerprints[&c])
                    .map(|r| (c, r))
            })
            .collect()
    };
    fs::write(&marker, b"").map_err(|e| Error::io(&marker, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    let ctx = CorruptionContext::new(opts.psf_source.clone());
    let reusable = |cell: Cell, pair_id: &str| -> Option<[String; 2]> {
        let hashes = previous.get(&cell)?.files.get(pair_id)?;
        let ok = [Frame::A, Frame::B]
            .iter()
            .zip(hashes)
            .all(|(&f, h)| file_matches(&out.join(corrupted_rel_path(cell.kind, cell.severity, pair_id, f)), h));
        ok.then(|| hashes.clone())
    };

    let pair_cells: Vec<Cell> = plan.cells.iter().copied().filter(|c| !is_video(c.kind)).collect();
    let video_cells: Vec<Cell> = plan.cells.iter().copied().filter(|c| is_video(c.kind)).collect();

    // Per pair: every non-video cell.
    let per_pair: Vec<Result<(Vec<(Cell, String, [String; 2])>, usize, usize)>> = pool.install(|| {
        plan.pairs
            .par_iter()
            .map(|rec| {
                let mut results = Vec::with_capacity(pair_cells.len());
                let (mut generated, mut skipped) = (0, 0);
                let mut clean: Option<ImagePair> = None;
                let mut window_cache = HashMap::new();
                for &cell in &pair_cells {
                    if let Some(h) = reusable(cell, &rec.pair_id) {
                        results.push((cell, rec.pair_id.clone(), h));
                        skipped += 2;
                        continue;
                    }
                    let corrupted = if cell.kind == CorruptionKind::ObjectMotionBlur {
                        let seq = rec
                            .sequence
                            .as_deref()
                            .and_then(|s| plan.sequence(s))
                            .ok_or(Error::RequiresStream(cell.kind))?;
                        let (ka, kb) = rec.stream_indices.ok_or(Error::RequiresStream(cell.kind))?;
                        let c = cell.severity.pick(&OBJECT_MOTION_HALF_WIDTH);
                        let a = accumulate_clamped(&seq.stream, ka, c, &mut window_cache)?;
                        let b = accumulate_clamped(&seq.stream, kb, c, &mut window_cache)?;
                        ImagePair::new(a, b, rec.pair_id.clone(), rec.timestamp_gap)?
                    } else {
                        if clean.is_none() {
                            clean = Some(ImagePair::new(
                                Image::load(&rec.frame_a)?,
                                Image::load(&rec.frame_b)?,
                                rec.pair_id.clone(),
                                rec.timestamp_gap,
                            )?);
                        }
                        corrupt_pair(
                            clean.as_ref().unwrap(),
                            cell.kind,
                            cell.severity,
                            plan.global_seed,
                            &ctx,
                        )?
                    };
                    results.push((cell, rec.pair_id.clone(), write_pair(out, cell, &corrupted)?));
                    generated += 2;
                }
                Ok((results, generated, skipped))
            })
            .collect()
    });

    let mut files: CellFiles = BTreeMap::new();
    let mut video_runs: BTreeMap<Cell, Vec<VideoRunRecord>> = BTreeMap::new();
    let (mut generated, mut skipped) = (0usize, 0usize);
    for r in per_pair {
        let (results, g, s) = r?;
        generated += g;
        skipped += s;
        for (cell, id, h) in results {
            files.entry(cell).or_default().insert(id, h);
        }
    }

    // Per sequence: one encode per video cell.
    if let Some(encoder) = &encoder {
        let jobs: Vec<(&GoproSequence, Cell)> = plan
            .sequences
            .iter()
            .flat_map(|s| video_cells.iter().map(move |&c| (s, c)))
            .collect();
        let results: Vec<Result<(Cell, Vec<(String, [String; 2])>, Option<VideoRunRecord>, usize, usize)>> = pool
            .install(|| {
                jobs.par_iter()
                    .map(|&(seq, cell)| {
                        let pairs: Vec<&PairRecord> = plan
                            .pairs
                            .iter()
                            .filter(|p| p.sequence.as_deref() == Some(seq.name.as_str()))
                            .collect();
                        let reused: Vec<Option<[String; 2]>> =
                            pairs.iter().map(|p| reusable(cell, &p.pair_id)).collect();
                        if reused.iter().all(Option::is_some) {
                            let run = previous
                                .get(&cell)
                                .and_then(|r| r.video_runs.iter().find(|v| v.sequence == seq.name).cloned());
                            let files = pairs
                                .iter()
                                .zip(reused)
                                .map(|(p, h)| (p.pair_id.clone(), h.unwrap()))
                                .collect();
                            return Ok((cell, files, run, 0, 2 * pairs.len()));
                        }
                        let keep: BTreeSet<usize> = pairs
                            .iter()
                            .flat_map(|p| {
                                let (a, b) = p.stream_indices.expect("stream pairs");
                                [a, b]
                            })
                            .collect();
                        let workdir = out
                            .join(".work")
                            .join(&seq.name)
                            .join(cell.kind.name())
                            .join(cell.severity.to_string());
                        let (frames, info) =
                            video::corrupt_stream(&seq.stream, cell.kind, cell.severity, &workdir, encoder, &keep)?;
                        let _ = fs::remove_dir_all(&workdir);
                        let mut written = Vec::with_capacity(pairs.len());
                        for p in &pairs {
                            let (a, b) = p.stream_indices.expect("stream pairs");
                            let pair = ImagePair::new(
                                frames[&a].clone(),
                                frames[&b].clone(),
                                p.pair_id.clone(),
                                p.timestamp_gap,
                            )?;
                            written.push((p.pair_id.clone(), write_pair(out, cell, &pair)?));
                        }
                        let record = VideoRunRecord {
                            sequence: seq.name.clone(),
                            info,
                        };
                        Ok((cell, written, Some(record), 2 * pairs.len(), 0))
                    })
                    .collect()
            });
        for r in results {
            let (cell, written, run, g, s) = r?;
            generated += g;
            skipped += s;
            files.entry(cell).or_default().extend(written);
            if let Some(run) = run {
                video_runs.entry(cell).or_default().push(run);
            }
        }
        let _ = fs::remove_dir(out.join(".work"));
    }

    for &cell in &plan.cells {
        let mut runs = video_runs.remove(&cell).unwrap_or_default();
        runs.sort_by(|a, b| a.sequence.cmp(&b.sequence));
        let rec = CellRecord {
            fingerprint: fingerprints[&cell].clone(),
            files: files.remove(&cell).unwrap_or_default(),
            video_runs: runs,
        };
        write_cell_record(out, cell, &rec)?;
    }

    // The manifest lists every declared cell whose record matches these settings
    // and covers every pair, including cells left by earlier runs.
    let all_cells: Vec<Cell> = plan
        .benchmark
        .corruption_set()
        .into_iter()
        .flat_map(|kind| Severity::ALL.into_iter().map(move |severity| Cell { kind, severity }))
        .collect();
    let mut cells = Vec::new();
    let mut manifest_runs = Vec::new();
    for cell in all_cells {
        let Some(rec) = read_cell_record(out, cell) else {
            continue;
        };
        let expected = match fingerprints.get(&cell) {
            Some(f) => f.clone(),
            None => plan.fingerprint(cell, encoder.as_ref(), interpolated)?,
        };
        if rec.fingerprint != expected || !plan.pairs.iter().all(|p| rec.files.contains_key(&p.pair_id)) {
            continue;
        }
        cells.push(cell);
        manifest_runs.extend(rec.video_runs);
    }
    cells.sort();
    let encoder_version = encoder
        .as_ref()
        .map(|e| e.version.clone())
        .or_else(|| manifest_runs.first().map(|r| r.info.encoder_version.clone()));
    let manifest = BenchmarkManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        benchmark: plan.benchmark,
        split: plan.split,
        global_seed: plan.global_seed,
        corruption_set: plan.benchmark.corruption_set(),
        pairs: plan.pairs.clone(),
        cells,
        psf_source: psf_description(&opts.psf_source),
        encoder_version,
        video_runs: manifest_runs,
        run_config: opts.run_config.clone(),
    };
    let manifest_path = manifest.save(out)?;
    fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    Ok(BuildOutcome {
        manifest,
        manifest_path,
        generated_files: generated,
        skipped_files: skipped,
    })
}

/// Builds KITTI-FC for one split: 20 kinds × 5 severities over the split's pairs.
pub fn build_kitti_fc(
    kitti_root: impl AsRef<Path>,
    split: Split,
    out: impl AsRef<Path>,
    global_seed: u64,
    opts: &BuildOptions,
) -> Result<BuildOutcome> {
    let cells = selected_cells(Benchmark::KittiFc, opts)?;
    let pairs = kitti_split(discover_kitti(kitti_root)?, split);
    run(Plan {
        benchmark: Benchmark::KittiFc,
        split: Some(split),
        out: out.as_ref(),
        global_seed,
        opts,
        cells,
        pairs,
        sequences: Vec::new(),
    })
}

/// Builds GoPro-FC: 30 fps pairs cut every 32 frames of the 960 fps stream,
/// all 24 kinds × 5 severities.
pub fn build_gopro_fc(
    gopro_root: impl AsRef<Path>,
    frames_4x: Option<&Path>,
    out: impl AsRef<Path>,
    global_seed: u64,
    opts: &BuildOptions,
) -> Result<BuildOutcome> {
    let cells = selected_cells(Benchmark::GoproFc, opts)?;
    if frames_4x.is_none() && !opts.naive_interp && cells.iter().any(|c| c.kind.needs_stream()) {
        return Err(Error::Usage(
            "object motion and video corruptions need the 960 fps stream: pass --frames-4x or allow --naive-interp"
                .into(),
        ));
    }
    let names: Vec<String> = match &opts.sequences {
        Some(s) => s.clone(),
        None => GOPRO_SEQUENCES.iter().map(|s| s.to_string()).collect(),
    };
    let sequences = discover_gopro(gopro_root.as_ref(), frames_4x, &names)?;
    let pairs = sequences.iter().flat_map(gopro_pairs).collect();
    run(Plan {
        benchmark: Benchmark::GoproFc,
        split: None,
        out: out.as_ref(),
        global_seed,
        opts,
        cells,
        pairs,
        sequences,
    })
}

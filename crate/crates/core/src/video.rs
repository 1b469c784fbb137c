//! H.264 round trips through an external ffmpeg: CRF and average-bit-rate
//! compression, and bit errors injected into the coded stream.
//!
//! Frames are fed as raw RGB at 960 fps, encoded with libx264 (yuv420p,
//! default preset and GOP) and decoded back. Decoded frames are placed by
//! presentation timestamp, so frames the decoder drops are filled with the
//! nearest decoded frame and the output stays index-aligned with the input.

use std::collections::{BTreeMap, BTreeSet};
use std::env;
use std::ffi::OsString;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::corruption::{CorruptionKind, Severity};
use crate::error::{Error, Result};
use crate::image::{quantize_u8, Image, ImagePair};
use crate::ladders;

pub const STREAM_FPS: u32 = 960;
/// Clean pairs are cut this many stream frames apart (1/30 s at 960 fps).
pub const PAIR_STRIDE: usize = 32;
pub const ENCODER_ENV: &str = "FLOWCORRUPT_FFMPEG";

/// Random access to an ordered frame sequence.
pub trait FrameSource: Sync {
    fn len(&self) -> usize;
    fn dims(&self) -> (usize, usize);
    fn frame(&self, index: usize) -> Result<Image>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl FrameSource for &[Image] {
    fn len(&self) -> usize {
        <[Image]>::len(self)
    }

    fn dims(&self) -> (usize, usize) {
        self.first().map(Image::dims).unwrap_or((0, 0))
    }

    fn frame(&self, index: usize) -> Result<Image> {
        self.get(index).cloned().ok_or(Error::IndexOutOfBounds {
            index,
            len: <[Image]>::len(self),
        })
    }
}

/// A located ffmpeg binary and its version banner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoder {
    pub program: PathBuf,
    pub version: String,
}

impl Encoder {
    /// Resolution order: explicit path, `FLOWCORRUPT_FFMPEG`, then `ffmpeg` on `PATH`.
    pub fn locate(explicit: Option<&Path>) -> Result<Self> {
        let program = explicit
            .map(Path::to_path_buf)
            .or_else(|| env::var_os(ENCODER_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("ffmpeg"));
        let out = Command::new(&program)
            .arg("-hide_banner")
            .arg("-version")
            .output()
            .map_err(|_| Error::EncoderMissing {
                tool: program.display().to_string(),
            })?;
        let banner = String::from_utf8_lossy(&out.stdout);
        let version = banner.lines().next().unwrap_or("").trim().to_string();
        if !out.status.success() || !version.starts_with("ffmpeg version") {
            return Err(Error::EncoderMissing {
                tool: program.display().to_string(),
            });
        }
        Ok(Self { program, version })
    }
}

/// One external process call, reconstructible from kind, severity and paths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderInvocation {
    pub program: String,
    pub args: Vec<String>,
    pub expected_status: i32,
}

impl EncoderInvocation {
    fn new(program: &Path, args: Vec<String>) -> Self {
        Self {
            program: program.display().to_string(),
            args,
            expected_status: 0,
        }
    }

    pub fn command_line(&self) -> String {
        std::iter::once(self.program.as_str())
            .chain(self.args.iter().map(String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn command(&self) -> Command {
        let mut c = Command::new(&self.program);
        c.args(self.args.iter().map(OsString::from));
        c
    }

    fn check(&self, status: std::process::ExitStatus, stderr: &[u8]) -> Result<()> {
        if status.code() == Some(self.expected_status) {
            return Ok(());
        }
        let text = String::from_utf8_lossy(stderr);
        let tail: Vec<&str> = text.lines().rev().take(20).collect();
        Err(Error::ExternalTool {
            command: self.command_line(),
            status: status.to_string(),
            stderr: tail.into_iter().rev().collect::<Vec<_>>().join("\n"),
        })
    }
}

/// Ladder parameter for a stream-level kind.
pub fn ladder_value(kind: CorruptionKind, severity: Severity) -> Result<u64> {
    Ok(match kind {
        CorruptionKind::H264Crf => severity.pick(&ladders::H264_CRF) as u64,
        CorruptionKind::H264Abr => severity.pick(&ladders::H264_ABR),
        CorruptionKind::BitError => severity.pick(&ladders::BIT_ERROR_NOISE),
        other => {
            return Err(Error::Usage(format!("{other} is not a video corruption")));
        }
    })
}

fn even(n: usize) -> usize {
    n + n % 2
}

/// The encode, optional noise, and decode calls for one run.
pub fn plan_invocations(
    encoder: &Path,
    kind: CorruptionKind,
    severity: Severity,
    dims: (usize, usize),
    workdir: &Path,
) -> Result<Vec<EncoderInvocation>> {
    let value = ladder_value(kind, severity)?;
    let (w, h) = (even(dims.0), even(dims.1));
    let encoded = workdir.join("encoded.mp4");
    let noisy = workdir.join("noisy.mp4");
    let s = |v: &str| v.to_string();
    let mut encode = vec![
        s("-hide_banner"),
        s("-nostdin"),
        s("-loglevel"),
        s("error"),
        s("-y"),
        s("-f"),
        s("rawvideo"),
        s("-pix_fmt"),
        s("rgb24"),
        s("-s"),
        format!("{w}x{h}"),
        s("-r"),
        STREAM_FPS.to_string(),
        s("-i"),
        s("pipe:0"),
        s("-c:v"),
        s("libx264"),
        s("-pix_fmt"),
        s("yuv420p"),
    ];
    match kind {
        CorruptionKind::H264Crf => encode.extend([s("-crf"), value.to_string()]),
        CorruptionKind::H264Abr => encode.extend([s("-b:v"), value.to_string()]),
        // Bit errors are injected into a stream coded at the encoder's default quality.
        _ => encode.extend([s("-crf"), ladders::H264_CRF[0].to_string()]),
    }
    encode.push(encoded.display().to_string());
    let mut calls = vec![EncoderInvocation::new(encoder, encode)];
    let mut decode_input = encoded;
    if kind == CorruptionKind::BitError {
        calls.push(EncoderInvocation::new(
            encoder,
            vec![
                s("-hide_banner"),
                s("-nostdin"),
                s("-loglevel"),
                s("error"),
                s("-y"),
                s("-i"),
                decode_input.display().to_string(),
                s("-c"),
                s("copy"),
                s("-bsf:v"),
                format!("noise=amount={value}"),
                noisy.display().to_string(),
            ],
        ));
        decode_input = noisy;
    }
    calls.push(EncoderInvocation::new(
        encoder,
        vec![
            s("-hide_banner"),
            s("-nostdin"),
            s("-loglevel"),
            s("info"),
            s("-err_detect"),
            s("ignore_err"),
            s("-i"),
            decode_input.display().to_string(),
            s("-vf"),
            s("showinfo"),
            s("-fps_mode"),
            s("passthrough"),
            s("-f"),
            s("rawvideo"),
            s("-pix_fmt"),
            s("rgb24"),
            s("pipe:1"),
        ],
    ));
    Ok(calls)
}

/// Details of one round trip, for manifests and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRunInfo {
    pub kind: CorruptionKind,
    pub severity: Severity,
    pub encoder_version: String,
    pub invocations: Vec<String>,
    pub frames_in: usize,
    pub frames_decoded: usize,
    /// Stream indices that had no decoded frame and were filled from the nearest one.
    pub substituted: Vec<usize>,
    pub encoded_bytes: u64,
}

fn frame_bytes_padded(img: &Image, w: usize, h: usize) -> Vec<u8> {
    let (iw, ih) = img.dims();
    let mut out = Vec::with_capacity(w * h * 3);
    let data = img.data();
    for y in 0..h {
        let sy = y.min(ih - 1);
        for x in 0..w {
            let sx = x.min(iw - 1);
            let i = (sy * iw + sx) * 3;
            out.extend(data[i..i + 3].iter().map(|&v| quantize_u8(v)));
        }
    }
    out
}

fn crop_frame(raw: &[u8], w: usize, dims: (usize, usize)) -> Result<Image> {
    let (iw, ih) = dims;
    let mut bytes = Vec::with_capacity(iw * ih * 3);
    for y in 0..ih {
        bytes.extend_from_slice(&raw[y * w * 3..(y * w + iw) * 3]);
    }
    Image::from_rgb8(iw, ih, &bytes)
}

fn run_simple(call: &EncoderInvocation) -> Result<()> {
    let out = call
        .command()
        .stdin(Stdio::null())
        .output()
        .map_err(|e| Error::ExternalTool {
            command: call.command_line(),
            status: "failed to start".into(),
            stderr: e.to_string(),
        })?;
    call.check(out.status, &out.stderr)
}

fn spawn_error(call: &EncoderInvocation, e: std::io::Error) -> Error {
    Error::ExternalTool {
        command: call.command_line(),
        status: "failed to start".into(),
        stderr: e.to_string(),
    }
}

fn encode_stream(call: &EncoderInvocation, source: &dyn FrameSource, w: usize, h: usize) -> Result<()> {
    let mut child = call
        .command()
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| spawn_error(call, e))?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let (fed, err_text) = std::thread::scope(|scope| {
        let reader = scope.spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr.read_to_end(&mut buf);
            buf
        });
        let fed = (|| -> Result<()> {
            for i in 0..source.len() {
                let frame = source.frame(i)?;
                if stdin.write_all(&frame_bytes_padded(&frame, w, h)).is_err() {
                    // The encoder exited early; its status and stderr explain why.
                    break;
                }
            }
            Ok(())
        })();
        drop(stdin);
        (fed, reader.join().unwrap_or_default())
    });
    let status = child.wait().map_err(|e| spawn_error(call, e))?;
    fed?;
    call.check(status, &err_text)
}

/// Presentation timestamps of decoded frames, from `showinfo` output.
fn parse_showinfo(stderr: &str) -> Vec<f64> {
    stderr
        .lines()
        .filter(|l| l.contains("Parsed_showinfo") && l.contains(" n:"))
        .filter_map(|l| {
            let rest = &l[l.find("pts_time:")? + "pts_time:".len()..];
            rest.split_whitespace().next()?.parse::<f64>().ok()
        })
        .collect()
}

/// Maps every stream index to the decoded frame nearest in time.
fn nearest_decoded(pts: &[f64], len: usize) -> (Vec<usize>, Vec<usize>) {
    let slots: Vec<i64> = pts.iter().map(|t| (t * STREAM_FPS as f64).round() as i64).collect();
    let mut exact: BTreeMap<i64, usize> = BTreeMap::new();
    for (j, &s) in slots.iter().enumerate() {
        exact.entry(s).or_insert(j);
    }
    let mut mapping = Vec::with_capacity(len);
    let mut substituted = Vec::new();
    for i in 0..len as i64 {
        if let Some(&j) = exact.get(&i) {
            mapping.push(j);
            continue;
        }
        substituted.push(i as usize);
        let before = exact.range(..i).next_back();
        let after = exact.range(i..).next();
        let pick = match (before, after) {
            (Some((&b, &jb)), Some((&a, &ja))) => {
                if i - b <= a - i {
                    jb
                } else {
                    ja
                }
            }
            (Some((_, &j)), None) | (None, Some((_, &j))) => j,
            (None, None) => unreachable!("at least one decoded frame"),
        };
        mapping.push(pick);
    }
    (mapping, substituted)
}

fn decode_probe(call: &EncoderInvocation) -> Result<Vec<f64>> {
    let mut args = call.args.clone();
    // Same decode with the raw output discarded: only timestamps are needed.
    let n = args.len();
    args.truncate(n - 5);
    args.extend(["-f", "null", "-"].map(String::from));
    let probe = EncoderInvocation {
        program: call.program.clone(),
        args,
        expected_status: call.expected_status,
    };
    let out = probe
        .command()
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .output()
        .map_err(|e| spawn_error(&probe, e))?;
    probe.check(out.status, &out.stderr)?;
    Ok(parse_showinfo(&String::from_utf8_lossy(&out.stderr)))
}

fn decode_selected(
    call: &EncoderInvocation,
    wanted: &BTreeSet<usize>,
    padded: (usize, usize),
    dims: (usize, usize),
) -> Result<BTreeMap<usize, Image>> {
    let mut child = call
        .command()
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| spawn_error(call, e))?;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let frame_len = padded.0 * padded.1 * 3;
    let (frames, err_text) = std::thread::scope(|scope| {
        let reader = scope.spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr.read_to_end(&mut buf);
            buf
        });
        let mut frames = BTreeMap::new();
        let mut buf = vec![0u8; frame_len];
        let mut j = 0usize;
        let mut result = Ok(());
        while stdout.read_exact(&mut buf).is_ok() {
            if wanted.contains(&j) {
                match crop_frame(&buf, padded.0, dims) {
                    Ok(img) => {
                        frames.insert(j, img);
                    }
                    Err(e) => {
                        result = Err(e);
                        break;
                    }
                }
            }
            j += 1;
        }
        let _ = std::io::copy(&mut stdout, &mut std::io::sink());
        (result.map(|_| frames), reader.join().unwrap_or_default())
    });
    let status = child.wait().map_err(|e| spawn_error(call, e))?;
    call.check(status, &err_text)?;
    frames
}

/// Round-trips a frame stream and returns the decoded frames at `keep`.
pub fn corrupt_stream(
    source: &dyn FrameSource,
    kind: CorruptionKind,
    severity: Severity,
    workdir: &Path,
    encoder: &Encoder,
    keep: &BTreeSet<usize>,
) -> Result<(BTreeMap<usize, Image>, VideoRunInfo)> {
    let len = source.len();
    if len < 2 {
        return Err(Error::InvalidImage(format!(
            "video corruption needs at least 2 frames, got {len}"
        )));
    }
    if let Some(&bad) = keep.iter().find(|&&i| i >= len) {
        return Err(Error::IndexOutOfBounds { index: bad, len });
    }
    let dims = source.dims();
    let padded = (even(dims.0), even(dims.1));
    fs::create_dir_all(workdir).map_err(|e| Error::io(workdir, e))?;
    let calls = plan_invocations(&encoder.program, kind, severity, dims, workdir)?;
    let (decode, prep) = calls.split_last().expect("decode call");
    encode_stream(&prep[0], source, padded.0, padded.1)?;
    for call in &prep[1..] {
        run_simple(call)?;
    }
    let encoded_bytes = fs::metadata(workdir.join("encoded.mp4")).map(|m| m.len()).unwrap_or(0);

    let pts = decode_probe(decode)?;
    if pts.is_empty() {
        return Err(Error::ExternalTool {
            command: decode.command_line(),
            status: "no frames decoded".into(),
            stderr: String::new(),
        });
    }
    let (mapping, substituted) = nearest_decoded(&pts, len);
    let wanted: BTreeSet<usize> = keep.iter().map(|&i| mapping[i]).collect();
    let decoded = decode_selected(decode, &wanted, padded, dims)?;
    let mut out = BTreeMap::new();
    for &i in keep {
        let img = decoded.get(&mapping[i]).ok_or_else(|| Error::ExternalTool {
            command: decode.command_line(),
            status: "decoded stream shorter than its timestamps".into(),
            stderr: format!("frame {} missing", mapping[i]),
        })?;
        out.insert(i, img.clone());
    }
    let info = VideoRunInfo {
        kind,
        severity,
        encoder_version: encoder.version.clone(),
        invocations: calls.iter().map(EncoderInvocation::command_line).collect(),
        frames_in: len,
        frames_decoded: pts.len(),
        substituted,
        encoded_bytes,
    };
    Ok((out, info))
}

/// Encodes `frames` as one H.264 stream with the ladder setting and decodes
/// it back. Frame count and dimensions are preserved.
pub fn apply_video_corruption(
    frames: &[Image],
    severity: Severity,
    kind: CorruptionKind,
    workdir: &Path,
    encoder: &Encoder,
) -> Result<(Vec<Image>, VideoRunInfo)> {
    if let Some(first) = frames.first() {
        if let Some(bad) = frames.iter().find(|f| f.dims() != first.dims()) {
            return Err(Error::DimensionMismatch(format!(
                "stream frames differ in size: {:?} vs {:?}",
                first.dims(),
                bad.dims()
            )));
        }
    }
    let keep: BTreeSet<usize> = (0..frames.len()).collect();
    let (map, info) = corrupt_stream(&frames, kind, severity, workdir, encoder, &keep)?;
    Ok((map.into_values().collect(), info))
}

/// Stream indices of the clean pairs: `(32k, 32k + 32)` while both exist.
pub fn pair_indices(stream_len: usize) -> Vec<(usize, usize)> {
    if stream_len == 0 {
        return Vec::new();
    }
    (0..(stream_len - 1) / PAIR_STRIDE)
        .map(|k| (k * PAIR_STRIDE, (k + 1) * PAIR_STRIDE))
        .collect()
}

/// Cuts pairs out of a decoded stream at the given indices.
pub fn extract_pairs_from_stream(
    decoded: &[Image],
    indices: &[(usize, usize)],
    pair_ids: &[String],
    timestamp_gap: f64,
) -> Result<Vec<ImagePair>> {
    if pair_ids.len() != indices.len() {
        return Err(Error::Usage(format!(
            "{} pair ids for {} index pairs",
            pair_ids.len(),
            indices.len()
        )));
    }
    indices
        .iter()
        .zip(pair_ids)
        .map(|(&(a, b), id)| {
            let get = |i: usize| {
                decoded.get(i).cloned().ok_or(Error::IndexOutOfBounds {
                    index: i,
                    len: decoded.len(),
                })
            };
            ImagePair::new(get(a)?, get(b)?, id.clone(), timestamp_gap)
        })
        .collect()
}

mod common;

use flowcorrupt::static_ops::mse;
use flowcorrupt::video::{apply_video_corruption, extract_pairs_from_stream, pair_indices, Encoder};
use flowcorrupt::{CorruptionKind, Image, Severity};

fn stream(frames: usize, w: usize, h: usize) -> Vec<Image> {
    (0..frames).map(|k| common::scene(w, h, k as f32 * 0.5, 3)).collect()
}

fn encoder() -> Option<Encoder> {
    match Encoder::locate(None) {
        Ok(e) => Some(e),
        Err(e) => {
            eprintln!("skipping: {e}");
            None
        }
    }
}

fn sev(s: u8) -> Severity {
    Severity::new(s).unwrap()
}

#[test]
fn round_trip_keeps_count_and_size() {
    let Some(enc) = encoder() else { return };
    let frames = stream(40, 33, 21);
    for kind in [
        CorruptionKind::H264Crf,
        CorruptionKind::H264Abr,
        CorruptionKind::BitError,
    ] {
        let dir = tempfile::tempdir().unwrap();
        let (out, info) = apply_video_corruption(&frames, sev(3), kind, dir.path(), &enc).unwrap();
        assert_eq!(out.len(), frames.len(), "{kind}");
        assert!(out.iter().all(|f| f.dims() == (33, 21)), "{kind}");
        assert_eq!(info.frames_in, 40);
        assert_eq!(info.encoder_version, enc.version);
        assert!(info.encoded_bytes > 0);
    }
}

#[test]
fn invocations_carry_ladder_values() {
    let Some(enc) = encoder() else { return };
    let frames = stream(12, 16, 12);
    let dir = tempfile::tempdir().unwrap();
    let (_, info) = apply_video_corruption(&frames, sev(5), CorruptionKind::H264Crf, dir.path(), &enc).unwrap();
    assert!(info.invocations[0].contains("-crf 51"), "{}", info.invocations[0]);
    let (_, info) = apply_video_corruption(&frames, sev(2), CorruptionKind::BitError, dir.path(), &enc).unwrap();
    assert_eq!(info.invocations.len(), 3);
    assert!(
        info.invocations[1].contains("noise=amount=25000000"),
        "{}",
        info.invocations[1]
    );
}

#[test]
fn stronger_compression_loses_more() {
    let Some(enc) = encoder() else { return };
    let frames = stream(24, 64, 48);
    let loss = |s: u8| {
        let dir = tempfile::tempdir().unwrap();
        let (out, _) = apply_video_corruption(&frames, sev(s), CorruptionKind::H264Crf, dir.path(), &enc).unwrap();
        out.iter().zip(&frames).map(|(a, b)| mse(a, b)).sum::<f64>() / frames.len() as f64
    };
    let (low, high) = (loss(1), loss(5));
    assert!(high > low, "{low} vs {high}");
}

#[test]
fn encoding_is_repeatable() {
    let Some(enc) = encoder() else { return };
    let frames = stream(20, 32, 24);
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        apply_video_corruption(&frames, sev(4), CorruptionKind::H264Abr, dir.path(), &enc)
            .unwrap()
            .0
    };
    assert_eq!(run(), run());
}

#[test]
fn pairs_are_cut_at_clean_indices() {
    let frames = stream(97, 8, 6);
    let idx = pair_indices(frames.len());
    assert_eq!(idx, vec![(0, 32), (32, 64), (64, 96)]);
    let ids: Vec<String> = (0..3).map(|k| format!("s_{k:03}")).collect();
    let pairs = extract_pairs_from_stream(&frames, &idx, &ids, 1.0 / 30.0).unwrap();
    assert_eq!(pairs[1].frame_a, frames[32]);
    assert_eq!(pairs[1].frame_b, frames[64]);
    assert!(extract_pairs_from_stream(&frames[..50], &idx, &ids, 1.0 / 30.0).is_err());
}

#[test]
fn missing_encoder_is_reported() {
    let err = Encoder::locate(Some(std::path::Path::new("/nonexistent/ffmpeg"))).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/ffmpeg"), "{err}");
}

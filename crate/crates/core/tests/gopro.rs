mod common;

use std::path::Path;

use flowcorrupt::datasets::{build_gopro_fc, BuildOptions, GOPRO_SEQUENCES};
use flowcorrupt::manifest::{corrupted_rel_path, BenchmarkManifest, Frame};
use flowcorrupt::{CorruptionKind, Error, Image, Severity};

const SEQ: &str = GOPRO_SEQUENCES[0];

fn opts(kinds: &[CorruptionKind], naive_interp: bool) -> BuildOptions {
    BuildOptions {
        kinds: Some(kinds.to_vec()),
        sequences: Some(vec![SEQ.to_string()]),
        naive_interp,
        ..Default::default()
    }
}

/// Partial builds still declare the whole benchmark, so only the built cells are checked.
fn assert_built(m: &BenchmarkManifest, out: &Path, cells: usize) {
    assert_eq!(m.cells.len(), cells);
    let report = m.validate(out, true).unwrap();
    assert!(
        report.missing_files.is_empty() && report.size_mismatches.is_empty(),
        "{report:?}"
    );
    assert!(m.cells.iter().all(|c| !report.missing_cells.contains(c)));
}

fn load(path: &Path) -> Image {
    Image::load(path).unwrap()
}

#[test]
fn stream_kinds_need_high_rate_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let root = common::make_gopro(tmp.path(), &[SEQ], 9, 16, 12);
    let err = build_gopro_fc(
        &root,
        None,
        tmp.path().join("out"),
        0,
        &opts(&[CorruptionKind::ObjectMotionBlur], false),
    )
    .unwrap_err();
    assert!(
        matches!(err, Error::Usage(ref m) if m.contains("--naive-interp")),
        "{err}"
    );
    // Pair-level kinds do not need the stream.
    build_gopro_fc(
        &root,
        None,
        tmp.path().join("out"),
        0,
        &opts(&[CorruptionKind::Fog], false),
    )
    .unwrap();
}

#[test]
fn pairs_follow_the_stream_stride() {
    let tmp = tempfile::tempdir().unwrap();
    // 17 originals interpolate to 65 stream frames: pairs (0, 32) and (32, 64).
    let root = common::make_gopro(&tmp.path().join("gopro"), &[SEQ], 17, 16, 12);
    let out = tmp.path().join("out");
    let done = build_gopro_fc(
        &root,
        None,
        &out,
        5,
        &opts(&[CorruptionKind::Fog, CorruptionKind::ObjectMotionBlur], true),
    )
    .unwrap();
    let m = &done.manifest;
    assert!(!m.has_ground_truth());
    let ids: Vec<&str> = m.pairs.iter().map(|p| p.pair_id.as_str()).collect();
    assert_eq!(ids, [format!("{SEQ}_000"), format!("{SEQ}_001")]);
    assert_eq!(m.pairs[1].stream_indices, Some((32, 64)));
    assert_eq!(m.pairs[1].sequence.as_deref(), Some(SEQ));
    assert!((m.pairs[0].timestamp_gap - 1.0 / 30.0).abs() < 1e-12);
    // Stream frame 32k is original frame 8k.
    let original = |k: usize| load(&root.join(SEQ).join("sharp").join(format!("{k:06}.png")));
    assert_eq!(load(&m.pairs[1].frame_a), original(8));
    assert_eq!(load(&m.pairs[1].frame_b), original(16));
    assert_built(m, &out, 10);

    let blurred = |s: u8| {
        let rel = corrupted_rel_path(
            CorruptionKind::ObjectMotionBlur,
            Severity::new(s).unwrap(),
            &m.pairs[1].pair_id,
            Frame::A,
        );
        load(&out.join(rel))
    };
    assert_ne!(blurred(1), original(8));
    assert_ne!(blurred(1), blurred(5));
}

#[test]
fn high_rate_frames_take_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let root = common::make_gopro(&tmp.path().join("gopro"), &[SEQ], 3, 16, 12);
    let fast = tmp.path().join("fast");
    std::fs::create_dir_all(fast.join(SEQ)).unwrap();
    for k in 0..33 {
        common::scene(16, 12, k as f32 * 0.25, 9)
            .save_png(fast.join(SEQ).join(format!("{k:06}.png")))
            .unwrap();
    }
    let out = tmp.path().join("out");
    let done = build_gopro_fc(
        &root,
        Some(&fast),
        &out,
        1,
        &opts(&[CorruptionKind::ObjectMotionBlur], false),
    )
    .unwrap();
    assert_eq!(done.manifest.pairs.len(), 1);
    assert_eq!(done.manifest.pairs[0].frame_b, fast.join(SEQ).join("000032.png"));

    let missing = build_gopro_fc(
        &root,
        Some(&tmp.path().join("nowhere")),
        &out,
        1,
        &opts(&[CorruptionKind::Fog], false),
    )
    .unwrap_err();
    assert!(matches!(missing, Error::MissingInputs(_)), "{missing}");
}

#[test]
fn video_kinds_round_trip_whole_sequence() {
    if !common::ffmpeg_available() {
        eprintln!("skipping: no ffmpeg");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let root = common::make_gopro(&tmp.path().join("gopro"), &[SEQ], 17, 16, 12);
    let out = tmp.path().join("out");
    let kinds = [CorruptionKind::H264Crf, CorruptionKind::BitError];
    let done = build_gopro_fc(&root, None, &out, 2, &opts(&kinds, true)).unwrap();
    let m = &done.manifest;
    assert_built(m, &out, 10);
    assert_eq!(m.video_runs.len(), 2 * 5);
    assert!(
        m.encoder_version.as_deref().is_some_and(|v| v.contains("ffmpeg")),
        "{:?}",
        m.encoder_version
    );
    let again = build_gopro_fc(&root, None, &out, 2, &opts(&kinds, true)).unwrap();
    assert_eq!(again.generated_files, 0);
}

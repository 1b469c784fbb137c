#![allow(dead_code)]

use std::path::{Path, PathBuf};

use flowcorrupt::flow_io::{write_flow, FlowFormat};
use flowcorrupt::{FlowField, Image, ValidMask};

/// Textured frame translated by `shift` pixels.
pub fn scene(width: usize, height: usize, shift: f32, seed: u32) -> Image {
    let s = seed as f32 * 0.37;
    Image::from_fn(width, height, |x, y| {
        let xf = x as f32 + shift;
        let yf = y as f32;
        [
            0.5 + 0.35 * (xf * 0.41 + s).sin() * (yf * 0.23).cos(),
            0.5 + 0.3 * (xf * 0.17 - yf * 0.31 + s).sin(),
            0.3 + 0.4 * ((xf + yf) * 0.07 + s).cos().abs(),
        ]
    })
}

/// `<root>/image_2/{id}_10.png`, `{id}_11.png` and `<root>/flow_occ/{id}_10.png`
/// with flow `(id % 7 - 3, id % 5 - 2)` and an invalid left column.
pub fn make_kitti(root: &Path, pairs: usize, width: usize, height: usize) -> PathBuf {
    let images = root.join("image_2");
    let flows = root.join("flow_occ");
    std::fs::create_dir_all(&images).unwrap();
    std::fs::create_dir_all(&flows).unwrap();
    for i in 0..pairs {
        let id = format!("{i:06}");
        scene(width, height, 0.0, i as u32)
            .save_png(images.join(format!("{id}_10.png")))
            .unwrap();
        scene(width, height, 2.0, i as u32)
            .save_png(images.join(format!("{id}_11.png")))
            .unwrap();
        let field = kitti_gt_field(i, width, height);
        let mask = kitti_gt_mask(width, height);
        write_flow(
            &field,
            &mask,
            flows.join(format!("{id}_10.png")),
            FlowFormat::KittiPng16,
        )
        .unwrap();
    }
    root.to_path_buf()
}

pub fn kitti_gt_field(i: usize, width: usize, height: usize) -> FlowField {
    FlowField::constant(width, height, (i % 7) as f32 - 3.0, (i % 5) as f32 - 2.0)
}

pub fn kitti_gt_mask(width: usize, height: usize) -> ValidMask {
    ValidMask::new(width, height, (0..width * height).map(|i| i % width != 0).collect()).unwrap()
}

/// `<root>/<seq>/sharp/{k:06}.png` for each sequence.
pub fn make_gopro(root: &Path, sequences: &[&str], frames: usize, width: usize, height: usize) -> PathBuf {
    for (n, seq) in sequences.iter().enumerate() {
        let dir = root.join(seq).join("sharp");
        std::fs::create_dir_all(&dir).unwrap();
        for k in 0..frames {
            scene(width, height, k as f32 * 0.5, n as u32)
                .save_png(dir.join(format!("{k:06}.png")))
                .unwrap();
        }
    }
    root.to_path_buf()
}

pub fn ffmpeg_available() -> bool {
    flowcorrupt::video::Encoder::locate(None).is_ok()
}

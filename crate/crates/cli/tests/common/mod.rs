#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use semfocus::io::{save_image, BitDepth};
use semfocus_core::Image;

/// Bright vertical lines of `line` px every `period` px, starting at `offset`.
pub fn grating(h: usize, w: usize, period: usize, line: usize, offset: usize) -> Image {
    Image::from_fn(h, w, |_, c| {
        if c >= offset && (c - offset) % period < line {
            1.0
        } else {
            0.0
        }
    })
}

/// Smooth test pattern with some structure at several scales.
pub fn pattern(h: usize, w: usize, seed: usize) -> Image {
    let s = seed as f64;
    Image::from_fn(h, w, |r, c| {
        let (x, y) = (c as f64, r as f64);
        let v = 0.5 + 0.3 * ((x / (7.0 + s)).sin() * (y / 11.0).cos()) + 0.15 * (((x + y) / 23.0 + s).sin());
        v.clamp(0.0, 1.0)
    })
}

pub fn write(dir: &Path, name: &str, img: &Image) -> PathBuf {
    let path = dir.join(name);
    save_image(img, &path, BitDepth::Eight).unwrap();
    path
}

pub fn write_config(dir: &Path, json: &serde_json::Value) -> PathBuf {
    let path = dir.join("cfg.json");
    std::fs::write(&path, serde_json::to_string_pretty(json).unwrap()).unwrap();
    path
}

pub fn semfocus(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semfocus"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = semfocus(dir, args);
    assert!(
        out.status.success(),
        "semfocus {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Every file under `root` keyed by its relative path.
pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, acc);
            } else {
                acc.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(root, root, &mut acc);
    acc
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Rows of a CSV file as header-keyed maps.
pub fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    reader
        .records()
        .map(|r| header.iter().cloned().zip(r.unwrap().iter().map(String::from)).collect())
        .collect()
}

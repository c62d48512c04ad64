#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn vitforge() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vitforge"))
}

/// Runs the binary with `args`, returning its output.
pub fn run(args: &[&str]) -> Output {
    vitforge().args(args).output().expect("spawn vitforge")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Writes `per_class[c]` PNGs per class under `root/<class>/` plus `labels.csv`.
///
/// Class `c` of `k` brightens the `c`-th vertical band of a 16×16 image, so a
/// linear function of the band means separates the classes.
pub fn write_dataset(root: &Path, names: &[&str], per_class: &[usize], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = 16u32;
    let k = names.len() as u32;
    let mut csv = String::from("path,label\n");
    for (c, (&name, &n)) in names.iter().zip(per_class).enumerate() {
        std::fs::create_dir_all(root.join(name)).unwrap();
        for i in 0..n {
            let img = image::RgbImage::from_fn(side, side, |x, _| {
                let band = x * k / side;
                let base: f64 = if band == c as u32 { 200.0 } else { 60.0 };
                let mut px = [0u8; 3];
                for v in &mut px {
                    *v = (base + rng.random_range(-30.0..30.0)).clamp(0.0, 255.0) as u8;
                }
                image::Rgb(px)
            });
            let rel = format!("{name}/{i:03}.png");
            img.save(root.join(&rel)).unwrap();
            csv.push_str(&format!("{rel},{name}\n"));
        }
    }
    std::fs::write(root.join("labels.csv"), csv).unwrap();
}

/// Writes a run config for the tiny preset and returns its path.
pub fn tiny_config(dir: &Path, extra: serde_json::Value) -> PathBuf {
    let mut cfg = serde_json::json!({
        "preset": "tiny",
        "epochs": 5,
        "batch_size": 16,
        "lr": 0.001,
        "patience": 10,
        "seed": 1,
    });
    for (k, v) in extra.as_object().expect("object") {
        cfg[k] = v.clone();
    }
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

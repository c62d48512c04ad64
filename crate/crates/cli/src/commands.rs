use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;
use vitforge::checkpoint::{self, params_from_named, params_to_named, validate_against_config, HeadPolicy, NamedTensor};
use vitforge::model::predict;
use vitforge::preprocess::{decode_image, prepare_sample_into, write_label_csv, ImageSample, CHANNELS};
use vitforge::tensor::kernels;
use vitforge::train::{evaluate, fit, EpochEvent, TrainConfig};
use vitforge::{Tensor, ViTConfig, ViTParams, VisionTransformer};

use crate::config::{check_ratio, RunConfig};
use crate::data::{self, DataRoot, Manifests, TEST_CSV, TRAIN_CSV};
use crate::UsageError;

/// Metadata stored alongside the parameters in every checkpoint the CLI writes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ViTConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<serde_json::Value>,
}

pub struct Loaded {
    pub meta: CheckpointMeta,
    pub model: VisionTransformer,
    pub params: ViTParams<f32>,
}

/// Reads a checkpoint written by `train` or `import-weights`.
pub fn load_model(path: &Path) -> Result<Loaded> {
    let ckpt = checkpoint::load(path)?;
    let meta: CheckpointMeta = serde_json::from_value(ckpt.metadata.clone()).map_err(|e| {
        vitforge::Error::Dataset(format!("{}: metadata lacks a model config: {e}", path.display()))
    })?;
    let params = params_from_named(&ckpt.tensors, &meta.config)?;
    Ok(Loaded {
        model: VisionTransformer::new(meta.config)?,
        meta,
        params,
    })
}

fn save_params(path: &Path, params: &ViTParams<f32>, meta: &CheckpointMeta) -> Result<()> {
    checkpoint::save(path, &params_to_named(params), &serde_json::to_value(meta)?)
        .with_context(|| format!("writing {}", path.display()))
}

fn head_classes(tensors: &[NamedTensor]) -> Option<usize> {
    tensors
        .iter()
        .find(|t| t.name == "head.bias")
        .and_then(|t| t.shape.first().copied())
}

/// Builds parameters for `cfg` from an existing checkpoint, optionally replacing its head.
fn params_from_tensors(tensors: &[NamedTensor], cfg: &ViTConfig, reinit_head: Option<u64>) -> Result<ViTParams<f32>> {
    let Some(seed) = reinit_head else {
        return Ok(params_from_named(tensors, cfg)?);
    };
    validate_against_config(tensors, cfg, HeadPolicy::Exempt)?;
    let classes = head_classes(tensors).unwrap_or(0);
    let source_cfg = ViTConfig {
        num_classes: classes,
        ..*cfg
    };
    let mut params: ViTParams<f32> = params_from_named(tensors, &source_cfg)?;
    params.reinit_head(cfg.num_classes, seed);
    Ok(params)
}

pub fn split(data: &Path, ratio: f64, seed: u64, out: Option<&Path>) -> Result<()> {
    check_ratio(ratio)?;
    let entries = data::read_labels(data)?;
    let (train, test) = data::split_entries(&entries, ratio, seed)?;
    let out = out.unwrap_or(data);
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_label_csv(out.join(TRAIN_CSV), &train)?;
    write_label_csv(out.join(TEST_CSV), &test)?;
    eprintln!("{} train / {} test rows written to {}", train.len(), test.len(), out.display());
    Ok(())
}

pub struct TrainArgs {
    pub config: Option<PathBuf>,
    pub data: PathBuf,
    pub out: PathBuf,
    pub init_weights: Option<PathBuf>,
    pub reinit_head: bool,
    pub manifests: Manifests,
    pub overrides: RunConfig,
}

#[derive(Serialize)]
struct Timing {
    epoch: usize,
    wall_time: f64,
}

pub fn train(args: TrainArgs) -> Result<()> {
    let run = RunConfig::load(args.config.as_deref(), &args.overrides)?;
    let train_cfg = run.train_config()?;
    let ratio = run.split_ratio()?;
    if args.reinit_head && args.init_weights.is_none() {
        return Err(UsageError("--reinit-head requires --init-weights".into()).into());
    }
    // geometry problems surface before any image is decoded
    run.model_config(run.num_classes.or(Some(2)))?;

    let root = DataRoot::new(&args.data)?;
    let data = data::load_train_data(&root, &args.manifests, ratio, train_cfg.seed)?;
    let cfg = run.model_config(Some(data.class_names.len()))?;
    let model = VisionTransformer::new(cfg)?;
    let init = match &args.init_weights {
        Some(path) => {
            let ckpt = checkpoint::load(path)?;
            params_from_tensors(&ckpt.tensors, &cfg, args.reinit_head.then_some(train_cfg.seed))?
        }
        None => ViTParams::init(&cfg, train_cfg.seed)?,
    };

    let out = &args.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let resolved = json!({
        "model": cfg,
        "train": train_cfg,
        "split_ratio": ratio,
        "class_names": data.class_names,
        "train_samples": data.train.len(),
        "test_samples": data.test.len(),
    });
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(&resolved)? + "\n")?;
    let mut log = BufWriter::new(File::create(out.join("log.jsonl"))?);
    let mut timing = BufWriter::new(File::create(out.join("timing.jsonl"))?);

    let meta_for = |ev: &EpochEvent<'_>| CheckpointMeta {
        config: cfg,
        class_names: Some(data.class_names.clone()),
        train: Some(train_cfg),
        epoch: Some(ev.log.epoch),
        test_loss: Some(ev.log.test_loss),
        test_accuracy: Some(ev.log.test_accuracy),
        source: None,
    };
    let outcome = fit(&model, init, data.train.as_ref(), data.test.as_ref(), &train_cfg, |ev| {
        let io = |e: std::io::Error| vitforge::Error::Io {
            path: out.clone(),
            source: e,
        };
        writeln!(log, "{}", serde_json::to_string(ev.log).expect("log serializes")).map_err(io)?;
        log.flush().map_err(io)?;
        let t = Timing {
            epoch: ev.log.epoch,
            wall_time: ev.log.wall_time,
        };
        writeln!(timing, "{}", serde_json::to_string(&t).expect("timing serializes")).map_err(io)?;
        timing.flush().map_err(io)?;

        let meta = meta_for(&ev);
        let named = params_to_named(ev.params);
        let meta = serde_json::to_value(&meta).expect("metadata serializes");
        if ev.improved {
            checkpoint::save(out.join("best.ckpt"), &named, &meta)?;
        }
        checkpoint::save(out.join("last.ckpt"), &named, &meta)?;
        eprintln!(
            "epoch {:>3}  train loss {:.4} acc {:6.2}  test loss {:.4} acc {:6.2}{}",
            ev.log.epoch,
            ev.log.train_loss,
            ev.log.train_accuracy,
            ev.log.test_loss,
            ev.log.test_accuracy,
            if ev.improved { "  *" } else { "" }
        );
        Ok(())
    })?;
    let best = &outcome.logs[outcome.best_epoch - 1];
    eprintln!(
        "best epoch {} (test loss {:.4}, accuracy {:.2}){}",
        outcome.best_epoch,
        best.test_loss,
        best.test_accuracy,
        if outcome.stopped_early { ", stopped early" } else { "" }
    );
    Ok(())
}

pub fn eval(checkpoint: &Path, data: &Path, manifest: Option<&Path>, batch_size: usize) -> Result<()> {
    let loaded = load_model(checkpoint)?;
    let root = DataRoot::new(data)?;
    let ds = data::load_eval_data(&root, manifest, loaded.meta.class_names.as_deref())?;
    let cfg = TrainConfig {
        batch_size,
        ..Default::default()
    };
    let e = evaluate(&loaded.model, &loaded.params, ds.as_ref(), &cfg)?;
    eprintln!("loss {:.6}", e.loss);
    println!("{}", e.report.to_json());
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Prediction {
    pub label: usize,
    #[serde(rename = "className")]
    pub class_name: String,
    pub probabilities: Vec<f64>,
}

pub fn predict_image(checkpoint: &Path, image: &Path) -> Result<Prediction> {
    let loaded = load_model(checkpoint)?;
    let cfg = loaded.meta.config;
    let (pixels, h, w) = decode_image(image)?;
    let sample = ImageSample::new(pixels, h, w, 0, image.display().to_string())?;
    let side = cfg.image_size;
    let mut buf = vec![0f32; CHANNELS * side * side];
    prepare_sample_into(&sample, side, &mut buf);
    let input = Tensor::new([1, CHANNELS, side, side], buf)?;
    let logits = loaded.model.forward(&loaded.params, &input)?;
    let probs = kernels::softmax(&logits.cast::<f64>(), 1)?;
    let label = predict(&logits)[0];
    let class_name = match &loaded.meta.class_names {
        Some(names) => names[label].clone(),
        None => label.to_string(),
    };
    Ok(Prediction {
        label,
        class_name,
        probabilities: probs.into_data(),
    })
}

pub struct ImportArgs {
    pub input: PathBuf,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub reinit_head: bool,
    pub num_classes: Option<usize>,
    pub seed: u64,
    pub overrides: RunConfig,
}

pub fn import_weights(args: ImportArgs) -> Result<()> {
    let mut run = RunConfig::load(args.config.as_deref(), &args.overrides)?;
    if let Some(n) = args.num_classes {
        run.num_classes = Some(n);
    }
    let ckpt = checkpoint::load(&args.input)?;
    let input_classes = head_classes(&ckpt.tensors);
    let cfg = if args.reinit_head {
        if run.num_classes.is_none() {
            return Err(UsageError("--reinit-head requires --num-classes".into()).into());
        }
        run.model_config(None)?
    } else {
        run.model_config(run.num_classes.or(input_classes))?
    };
    let params = params_from_tensors(&ckpt.tensors, &cfg, args.reinit_head.then_some(args.seed))?;
    validate_against_config(&params_to_named(&params), &cfg, HeadPolicy::Strict)?;
    let meta = CheckpointMeta {
        config: cfg,
        class_names: None,
        train: None,
        epoch: None,
        test_loss: None,
        test_accuracy: None,
        source: Some(ckpt.metadata),
    };
    save_params(&args.out, &params, &meta)?;
    eprintln!(
        "wrote {} ({} tensors, {} classes)",
        args.out.display(),
        params.iter().len(),
        cfg.num_classes
    );
    Ok(())
}

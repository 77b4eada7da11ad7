use crate::augment::{center_crop, make_view, make_views, AugmentConfig};
use crate::datagen::{ImageSource, Split};
use crate::error::{Error, Result};
use crate::netarch::{DetectorNetwork, HeadKind};
use crate::tensorcore::RngStream;
use crate::training::loss::{bce_loss, nt_xent_loss};
use crate::training::optim::{Optimizer, PlateauConfig, PlateauState};
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;

/// Phase 1: label-free contrastive pretraining.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub tau: f64,
    pub images_per_batch: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub plateau: PlateauConfig,
    pub augment: AugmentConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            tau: 0.07,
            images_per_batch: 32,
            epochs: 30,
            learning_rate: 1e-4,
            plateau: PlateauConfig::default(),
            augment: AugmentConfig::default(),
        }
    }
}

/// Phase 2: supervised fine-tuning of the whole network.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub images_per_batch: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub plateau: PlateauConfig,
    pub augment: AugmentConfig,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            images_per_batch: 64,
            epochs: 30,
            learning_rate: 1e-5,
            plateau: PlateauConfig::default(),
            augment: AugmentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub history: Vec<EpochStats>,
}

impl TrainReport {
    pub fn final_val_loss(&self) -> Option<f64> {
        self.history.last().map(|s| s.val_loss)
    }

    /// Loss history as CSV, one row per epoch.
    pub fn save_history(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = String::from("epoch,train_loss,val_loss,lr\n");
        for s in &self.history {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.epoch, s.train_loss, s.val_loss, s.lr
            ));
        }
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn check_common(images_per_batch: usize, epochs: usize, lr: f64) -> Result<()> {
    if images_per_batch < 2 {
        return Err(Error::Config(format!(
            "images_per_batch must be >= 2, got {images_per_batch}"
        )));
    }
    if epochs == 0 {
        return Err(Error::Config("epochs must be >= 1".into()));
    }
    if !(lr > 0.0) {
        return Err(Error::Config(format!(
            "learning_rate must be positive, got {lr}"
        )));
    }
    Ok(())
}

/// Contrastive pretraining on the train split. Labels are never read:
/// the positive pair for each image is its own second augmented view.
/// Per-item augmentation randomness is derived from (seed, item id,
/// epoch), so it is independent of batch order.
pub fn pretrain(
    net: &mut DetectorNetwork,
    source: &dyn ImageSource,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<TrainReport> {
    check_common(cfg.images_per_batch, cfg.epochs, cfg.learning_rate)?;
    cfg.augment.validate()?;
    if !(cfg.tau > 0.0) {
        return Err(Error::Config(format!(
            "temperature must be positive, got {}",
            cfg.tau
        )));
    }
    if net.head_kind() != HeadKind::Projection {
        return Err(Error::Contract(
            "pretrain requires the projection head".into(),
        ));
    }
    let train = source.records_in(Split::Train);
    if train.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "contrastive training needs at least 2 train images, got {}",
            train.len()
        )));
    }
    let val = source.records_in(Split::Val);

    let root = RngStream::new(seed, 0).child("pretrain");
    let mut opt = Optimizer::sgd(cfg.learning_rate);
    let mut plateau = PlateauState::new();
    let mut report = TrainReport::default();

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        root.child("shuffle").child_indexed(epoch as u64).shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut loss_items = 0usize;
        for chunk in order.chunks(cfg.images_per_batch) {
            if chunk.len() < 2 {
                continue;
            }
            let mut fp = net.forward();
            let mut embeddings = Vec::with_capacity(2 * chunk.len());
            for &idx in chunk {
                let rec = train[idx];
                let img = source.load(rec)?;
                let item_rng = root.child("augment").child(&rec.id).child_indexed(epoch as u64);
                let (v0, v1) = make_views(&img, &cfg.augment, &item_rng)?;
                embeddings.push(fp.embed(&v0)?);
                embeddings.push(fp.embed(&v1)?);
            }
            let loss = nt_xent_loss(fp.graph(), &embeddings, cfg.tau)?;
            loss_sum += fp.value(loss).item() * chunk.len() as f64;
            loss_items += chunk.len();
            let grads = fp.backward(loss)?;
            drop(fp);
            net.reset_grads();
            net.accumulate_grads(&grads);
            opt.step(net.params_mut())?;
        }
        let train_loss = loss_sum / loss_items.max(1) as f64;

        let val_loss = pretrain_val_loss(net, source, &val, cfg)?;
        let lr = plateau.observe(val_loss, opt.lr(), &cfg.plateau);
        report.history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            lr: opt.lr(),
        });
        opt.set_lr(lr);
    }
    Ok(report)
}

/// Validation loss for phase 1: deterministic center crops, both views
/// identical, no augmentation.
fn pretrain_val_loss(
    net: &DetectorNetwork,
    source: &dyn ImageSource,
    val: &[&crate::datagen::Record],
    cfg: &PretrainConfig,
) -> Result<f64> {
    let mut loss_sum = 0.0;
    let mut loss_items = 0usize;
    for chunk in val.chunks(cfg.images_per_batch) {
        if chunk.len() < 2 {
            continue;
        }
        let mut fp = net.forward();
        let mut embeddings = Vec::with_capacity(2 * chunk.len());
        for rec in chunk {
            let img = source.load(rec)?;
            let crop = center_crop(&img, cfg.augment.crop_size);
            let e = fp.embed(&crop)?;
            embeddings.push(e);
            embeddings.push(e);
        }
        let loss = nt_xent_loss(fp.graph(), &embeddings, cfg.tau)?;
        loss_sum += fp.value(loss).item() * chunk.len() as f64;
        loss_items += chunk.len();
    }
    if loss_items == 0 {
        return Err(Error::DegenerateInput(
            "validation split has fewer than 2 images".into(),
        ));
    }
    Ok(loss_sum / loss_items as f64)
}

/// Supervised fine-tuning with binary cross entropy. The whole network
/// trains, not just the new head.
pub fn finetune(
    net: &mut DetectorNetwork,
    source: &dyn ImageSource,
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<TrainReport> {
    check_common(cfg.images_per_batch, cfg.epochs, cfg.learning_rate)?;
    cfg.augment.validate()?;
    if net.head_kind() != HeadKind::Classifier {
        return Err(Error::Contract(
            "finetune requires the classifier head; call swap_head first".into(),
        ));
    }
    let train = source.records_in(Split::Train);
    if train.is_empty() {
        return Err(Error::DegenerateInput("train split is empty".into()));
    }
    let val = source.records_in(Split::Val);
    if val.is_empty() {
        return Err(Error::DegenerateInput("validation split is empty".into()));
    }

    let root = RngStream::new(seed, 0).child("finetune");
    let mut opt = Optimizer::adam(cfg.learning_rate);
    let mut plateau = PlateauState::new();
    let mut report = TrainReport::default();

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        root.child("shuffle").child_indexed(epoch as u64).shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut loss_items = 0usize;
        for chunk in order.chunks(cfg.images_per_batch) {
            let mut fp = net.forward();
            let mut logits = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let rec = train[idx];
                let img = source.load(rec)?;
                let item_rng = root.child("augment").child(&rec.id).child_indexed(epoch as u64);
                let view = make_view(&img, &cfg.augment, &item_rng)?;
                logits.push(fp.classify_logit(&view)?);
                labels.push(rec.label as f64);
            }
            let loss = bce_loss(fp.graph(), &logits, &labels)?;
            loss_sum += fp.value(loss).item() * chunk.len() as f64;
            loss_items += chunk.len();
            let grads = fp.backward(loss)?;
            drop(fp);
            net.reset_grads();
            net.accumulate_grads(&grads);
            opt.step(net.params_mut())?;
        }
        let train_loss = loss_sum / loss_items.max(1) as f64;

        let mut val_sum = 0.0;
        for rec in &val {
            let img = source.load(rec)?;
            let crop = center_crop(&img, cfg.augment.crop_size);
            let mut fp = net.forward();
            let logit = fp.classify_logit(&crop)?;
            let loss = fp.graph().bce_with_logit(logit, rec.label as f64)?;
            val_sum += fp.value(loss).item();
        }
        let val_loss = val_sum / val.len() as f64;

        let lr = plateau.observe(val_loss, opt.lr(), &cfg.plateau);
        report.history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            lr: opt.lr(),
        });
        opt.set_lr(lr);
    }
    Ok(report)
}

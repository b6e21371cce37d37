use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::Fields;
use crate::scene::ViewSet;
use crate::train::adamw::AdamW;
use crate::train::loss::{evaluate, Batch, FlowPixel, LossReport, LossWeights, Pixel};
use crate::train::TrainConfig;

/// Draws one step's samples, with replacement, uniformly over pixels.
pub fn sample_batch<R: Rng>(rng: &mut R, data: &ViewSet, config: &TrainConfig, weights: &LossWeights) -> Batch {
    let (w, h, n) = (data.width(), data.height(), data.len());
    let aux = config.aux_batch();
    let pixels = (0..config.batch_size)
        .map(|_| Pixel {
            view: rng.gen_range(0..n),
            x: rng.gen_range(0..w),
            y: rng.gen_range(0..h),
        })
        .collect();
    let pos = if weights.pos > 0.0 {
        (0..aux)
            .map(|_| Pixel {
                view: 0,
                x: rng.gen_range(0..w),
                y: rng.gen_range(0..h),
            })
            .collect()
    } else {
        Vec::new()
    };
    // bases are drawn so that both offset neighbours stay inside the image
    let reach = weights.rigid_step.ceil() as usize;
    let rigid = if weights.rigid > 0.0 && reach < w && reach < h {
        (0..aux)
            .map(|_| Pixel {
                view: rng.gen_range(0..n),
                x: rng.gen_range(0..w - reach),
                y: rng.gen_range(0..h - reach),
            })
            .collect()
    } else {
        Vec::new()
    };
    let flow = if weights.flow > 0.0 && !data.flows().is_empty() {
        (0..aux)
            .map(|_| FlowPixel {
                flow: rng.gen_range(0..data.flows().len()),
                x: rng.gen_range(0..w),
                y: rng.gen_range(0..h),
            })
            .collect()
    } else {
        Vec::new()
    };
    Batch {
        pixels,
        pos,
        rigid,
        flow,
    }
}

/// Step-by-step optimizer state over one scene. [`fit`] drives it to
/// completion; the service drives it while publishing progress.
pub struct Trainer<'a> {
    data: &'a ViewSet,
    config: TrainConfig,
    fields: Fields<f32>,
    grads: Fields<f32>,
    opt: AdamW<f32>,
    rng: ChaCha8Rng,
    step: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(data: &'a ViewSet, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let fields = Fields::init(config.mapping, config.atlas, &mut rng)?;
        Self::with_fields(data, config, fields, rng)
    }

    /// Starts from given parameters, e.g. a loaded checkpoint.
    pub fn resume(data: &'a ViewSet, config: TrainConfig, fields: Fields<f32>) -> Result<Self> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::with_fields(data, config, fields, rng)
    }

    fn with_fields(data: &'a ViewSet, config: TrainConfig, fields: Fields<f32>, rng: ChaCha8Rng) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Precondition("no views to train on".into()));
        }
        let grads = fields.zeros_like();
        let opt = AdamW::new(&fields, config.lr_mapping, config.lr_atlas, config.weight_decay);
        Ok(Self {
            data,
            config,
            fields,
            grads,
            opt,
            rng,
            step: 0,
        })
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.config.total_steps
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn fields(&self) -> &Fields<f32> {
        &self.fields
    }

    pub fn into_fields(self) -> Fields<f32> {
        self.fields
    }

    /// One optimizer step. Errors name the offending term and step.
    pub fn step(&mut self) -> Result<LossReport> {
        let weights = LossWeights::scheduled(self.step, &self.config, self.data);
        let batch = sample_batch(&mut self.rng, self.data, &self.config, &weights);
        for (_, _, g) in self.grads.tensors_mut() {
            g.fill(0.0);
        }
        let mut report = evaluate(&self.fields, self.data, &batch, &weights, Some(&mut self.grads))
            .map_err(|e| match e {
                Error::Numeric(m) => Error::Numeric(format!("{m} at step {}", self.step)),
                other => other,
            })?;
        report.step = self.step;
        self.opt.step(&mut self.fields, &self.grads);
        self.step += 1;
        Ok(report)
    }
}

pub struct FitResult {
    pub fields: Fields<f32>,
    pub history: Vec<LossReport>,
}

/// Runs the full schedule. `progress` sees every step's report.
pub fn fit(data: &ViewSet, config: &TrainConfig, mut progress: impl FnMut(&LossReport)) -> Result<FitResult> {
    let mut trainer = Trainer::new(data, config.clone())?;
    let mut history = Vec::with_capacity(config.total_steps);
    while !trainer.is_done() {
        let r = trainer.step()?;
        progress(&r);
        history.push(r);
    }
    Ok(FitResult {
        fields: trainer.into_fields(),
        history,
    })
}

pub fn write_loss_csv(path: &Path, history: &[LossReport]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut out = String::with_capacity(history.len() * 120);
    out.push_str(LossReport::CSV_HEADER);
    out.push('\n');
    for r in history {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

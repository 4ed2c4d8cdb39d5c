//! Parameter layout of the coarse field, fine field and blur kernel.

use std::ops::Range;

use crate::blur::{BlurKernel, KernelKind};
use crate::field::RadianceField;
use crate::regularize::mgs::MgsConfig;
use crate::render::{Projection, Renderer, SamplerConfig};
use crate::rng;

use super::config::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub coarse: RadianceField,
    pub fine: Option<RadianceField>,
    pub kernel: Option<BlurKernel>,
    pub len: usize,
}

impl Model {
    pub fn new(cfg: &TrainConfig, n_train_views: usize) -> Self {
        let coarse = RadianceField::new(cfg.field, 0);
        let fine = cfg.fine_field.then(|| RadianceField::new(cfg.field, coarse.end()));
        let field_end = fine.as_ref().map_or(coarse.end(), |f| f.end());
        let kernel = (cfg.kernel.kind != KernelKind::None).then(|| {
            BlurKernel::new(
                cfg.kernel,
                n_train_views,
                field_end,
                rng::key(cfg.seed, &[rng::purpose::INIT, 1]),
            )
        });
        let len = kernel.as_ref().map_or(field_end, |k| k.end());
        Model {
            coarse,
            fine,
            kernel,
            len,
        }
    }

    pub fn field_params(&self) -> Range<usize> {
        0..self.fine.as_ref().map_or(self.coarse.end(), |f| f.end())
    }

    pub fn kernel_params(&self) -> Range<usize> {
        let end = self.field_params().end;
        end..self.len
    }

    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut p = vec![0.0; self.len];
        let mut r = rng::substream(seed, &[rng::purpose::INIT, 0]);
        self.coarse.init(&mut p, &mut r);
        if let Some(f) = &self.fine {
            f.init(&mut p, &mut r);
        }
        if let Some(k) = &self.kernel {
            k.init(&mut p, &mut r);
        }
        p
    }

    pub fn renderer(&self, sampler: SamplerConfig, mgs: MgsConfig, projection: Projection) -> Renderer<'_> {
        Renderer {
            coarse: &self.coarse,
            fine: self.fine.as_ref(),
            sampler,
            mgs,
            projection,
        }
    }
}

use std::path::PathBuf;

use hgmrf_core::field::{Hypothesis, TorusField, TorusSampler};
use hgmrf_core::SfarParams;

use crate::args::{FieldFormat, HypothesisArg, SampleArgs, SampleKind};
use crate::config::{at_least, at_most};
use crate::error::Result;
use crate::{model_params, Sink};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    pub side: usize,
    pub kind: SampleKind,
    pub hypothesis: Hypothesis,
    pub params: SfarParams,
    pub seed: u64,
    pub format: FieldFormat,
    pub output: Option<PathBuf>,
}

impl SampleArgs {
    pub fn resolve(self) -> Result<SamplePlan> {
        let side = at_most("side", at_least("side", self.side.unwrap_or(64), 2)?, 8192)?;
        Ok(SamplePlan {
            side,
            kind: self.kind.unwrap_or(SampleKind::Signal),
            hypothesis: match self.hypothesis.unwrap_or(HypothesisArg::H1) {
                HypothesisArg::H0 => Hypothesis::H0,
                HypothesisArg::H1 => Hypothesis::H1,
            },
            params: model_params(self.snr_db.unwrap_or(0.0), self.zeta.unwrap_or(0.1), self.sigma2.unwrap_or(1.0))?,
            seed: self.seed.unwrap_or(1),
            format: self.format.unwrap_or(FieldFormat::Csv),
            output: self.output,
        })
    }
}

pub fn draw(plan: &SamplePlan) -> Result<TorusField> {
    let sampler = TorusSampler::new(plan.params, plan.side)?;
    Ok(match plan.kind {
        SampleKind::Signal => sampler.signal(plan.seed),
        SampleKind::Noise => sampler.noise(plan.seed),
        SampleKind::Observation => sampler.observation(plan.hypothesis, plan.seed),
    })
}

pub fn run(args: SampleArgs) -> Result<()> {
    let plan = args.resolve()?;
    let field = draw(&plan)?;
    let mut out = Sink::file_or_stdout(plan.output.as_deref())?;
    match plan.format {
        FieldFormat::Binary => out.write_all(&field.to_bytes())?,
        FieldFormat::Csv => {
            let mut buf = Vec::new();
            field.write_csv(&mut buf)?;
            out.write_all(&buf)?;
        }
    }
    out.finish()
}

//! Rule-based instruction templates used when no model candidate validates.

use std::f64::consts::PI;

use crate::error::Result;
use crate::mask::DefectType;
use crate::rng::{self, SeededRng, Stream};
use crate::synth::freeform::{DEFAULT_SMOOTH_K, DEFAULT_SMOOTH_LAMBDA};
use crate::synth::geodesic::Polarity;

use super::llm::CategoryMetadata;
use super::schema::{
    BendSpec, CrackSpec, FreeformSpec, KernelChoice, LineSpec, Params, Region, SynthesisInstruction,
    DEFAULT_GRAPH_K, DEFAULT_HOLE_THRESHOLD, DEFAULT_H_MIN, DEFAULT_SIGMA_FRACTION,
};

fn u(r: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    rng::uniform(r, lo, hi)
}

fn int(r: &mut SeededRng, lo: usize, hi: usize) -> usize {
    lo + rng::sample_indices(r, hi - lo + 1, 1)[0]
}

/// Draws a template instruction for a defect type name.
///
/// The parameter table is category-independent; `meta` is accepted so
/// callers can pass the same context they give the model client.
pub fn fallback_template(u: &str, meta: &CategoryMetadata, seed: u64) -> Result<SynthesisInstruction> {
    let defect: DefectType = u.parse()?;
    log::debug!("rule template for {defect} on category {}", meta.category);
    Ok(template_for(defect, seed))
}

pub fn template_for(defect: DefectType, seed: u64) -> SynthesisInstruction {
    let mut r = rng::stream(seed, Stream::Template);
    let sample = |extent: Option<f64>| Region::Sample { bbox: None, extent };
    let line = |m, rr: f64, d: f64, dir, hole| {
        Params::Line(LineSpec {
            m,
            r: rr,
            d,
            dir,
            k_graph: DEFAULT_GRAPH_K,
            hole_threshold: hole,
        })
    };
    let (region, params) = match defect {
        DefectType::Bump | DefectType::Dent => {
            let dir = if defect == DefectType::Bump { Polarity::Outward } else { Polarity::Inward };
            let (rr, d) = (u(&mut r, 0.02, 0.1), u(&mut r, 0.01, 0.05));
            (sample(None), line(1, rr, d, dir, None))
        }
        DefectType::Scratch | DefectType::Groove => {
            let dir = if defect == DefectType::Groove { Polarity::Outward } else { Polarity::Inward };
            let m = int(&mut r, 2, 4);
            let (rr, d) = (u(&mut r, 0.02, 0.05), u(&mut r, 0.01, 0.05));
            let extent = u(&mut r, 0.2, 0.5);
            (sample(Some(extent)), line(m, rr, d, dir, None))
        }
        DefectType::Hole => {
            let (rr, d) = (u(&mut r, 0.05, 0.1), u(&mut r, 0.02, 0.05));
            (sample(None), line(1, rr, d, Polarity::Inward, Some(DEFAULT_HOLE_THRESHOLD)))
        }
        DefectType::Bend => {
            let delta = u(&mut r, 0.05, 0.15);
            let magnitude = u(&mut r, 0.1, 0.35);
            let theta = if u(&mut r, 0.0, 1.0) < 0.5 { -magnitude } else { magnitude };
            debug_assert!(theta.abs() <= PI / 2.0);
            (sample(None), Params::Bend(BendSpec { delta, theta, plane: None }))
        }
        DefectType::Crack => {
            let tau = u(&mut r, 0.02, 0.06);
            let sigma = u(&mut r, 0.0, 0.01);
            let rim = u(&mut r, 0.03, 0.08);
            (sample(None), Params::Crack(CrackSpec { tau, sigma, rim, plane: None }))
        }
        DefectType::Freeform => {
            let epsilon = u(&mut r, 0.03, 0.06);
            let extent = u(&mut r, 0.15, 0.3);
            let m = int(&mut r, 5, 8);
            let count = int(&mut r, 1, 5);
            (
                sample(Some(extent)),
                Params::Freeform(FreeformSpec {
                    m,
                    epsilon,
                    kernels: KernelChoice::Sampled {
                        count,
                        amplitude: [0.01, 0.05],
                        sigma_fraction: DEFAULT_SIGMA_FRACTION,
                    },
                    k_smooth: DEFAULT_SMOOTH_K,
                    lambda: DEFAULT_SMOOTH_LAMBDA,
                    h_min: DEFAULT_H_MIN,
                }),
            )
        }
    };
    SynthesisInstruction::new(defect, region, params, seed)
}

//! Declarative synthesis instructions: parsing, validation against a cloud,
//! rule-based fallbacks, an optional model client, and dispatch to the
//! synthesis operators.

pub mod ground;
pub mod llm;
pub mod schema;
pub mod template;
pub mod validate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ensure_normals, PointCloud};
use crate::mask::{AnomalyMask, DefectType};
use crate::pipeline::SdnProfile;
use crate::synth::freeform::{synthesize_freeform, FreeformParams, GaussianKernel, KernelSampling, KernelSpec};
use crate::synth::geodesic::{synthesize_line, LineParams};
use crate::synth::planar::{bend, crack, CrackParams, DEFAULT_MAX_BEND};
use crate::synth::{Synthesis, SynthesisDetails};

use ground::{ground, Grounding};
pub use llm::{mllm_generate, CategoryMetadata, EndpointConfig};
pub use schema::{parse_instruction, Operator, Params, Region, SynthesisInstruction, SCHEMA_VERSION};
pub use template::{fallback_template, template_for};
pub use validate::{validate, ValidationReport, Violation};

/// Which branch produced an instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Model,
    Rule,
    /// Supplied directly by the caller rather than through [`resolve`].
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub instruction: SynthesisInstruction,
    pub source: Source,
    /// Why a model candidate was rejected, if one was offered.
    pub rejection: Option<String>,
}

/// Strips prose or code fences around the outermost JSON object.
fn extract_json(text: &str) -> &str {
    match (text.find('{'), text.rfind('}')) {
        (Some(a), Some(b)) if a < b => &text[a..=b],
        _ => text,
    }
}

/// Accepts a model candidate if it parses, matches `u` and validates;
/// otherwise falls back to the rule template for `u`.
pub fn resolve(
    candidate: Option<&str>,
    u: DefectType,
    cloud: &PointCloud,
    meta: &CategoryMetadata,
    profile: &SdnProfile,
    seed: u64,
) -> Resolved {
    let rejection = match candidate {
        None => None,
        Some(text) => match parse_instruction(extract_json(text)) {
            Err(e) => Some(e.to_string()),
            Ok(instr) if instr.defect != u => Some(format!("candidate describes {}, requested {u}", instr.defect)),
            Ok(instr) => {
                let report = validate(&instr, cloud, profile);
                if report.valid {
                    return Resolved {
                        instruction: instr,
                        source: Source::Model,
                        rejection: None,
                    };
                }
                Some(report.summary())
            }
        },
    };
    if let Some(r) = &rejection {
        log::info!("model instruction for {u} on {} rejected: {r}", meta.category);
    }
    Resolved {
        instruction: template_for(u, seed),
        source: Source::Rule,
        rejection,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub source: Source,
    pub instruction: serde_json::Value,
    /// Category radius used to scale relative lengths.
    pub scale: f64,
    pub input_points: usize,
    pub output_points: usize,
    pub mask_points: usize,
    pub removed: Vec<usize>,
    pub details: SynthesisDetails,
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub cloud: PointCloud,
    pub mask: AnomalyMask,
    pub provenance: Provenance,
}

/// Runs the operator named by the instruction. Relative lengths are scaled
/// by the profile radius. Deterministic in its arguments.
pub fn execute(instr: &SynthesisInstruction, cloud: &PointCloud, profile: &SdnProfile) -> Result<Execution> {
    let context = format!("{} instruction (seed {})", instr.defect, instr.seed);
    let run = || -> Result<Synthesis> {
        profile.check()?;
        let cloud = ensure_normals(cloud)?;
        let rc = profile.radius;
        let grounding = ground(instr, &cloud, profile)?;
        match (&instr.params, grounding) {
            (Params::Line(l), Grounding::Anchors(a)) => synthesize_line(
                &cloud,
                &a,
                LineParams {
                    graph_k: l.k_graph,
                    radius: l.r * rc,
                    magnitude: l.d * rc,
                    polarity: l.dir,
                    hole_threshold: l.hole_threshold,
                },
                instr.defect,
            ),
            (Params::Bend(b), Grounding::Plane(p)) => bend(&cloud, &p, b.delta * rc, b.theta, DEFAULT_MAX_BEND),
            (Params::Crack(c), Grounding::Plane(p)) => crack(
                &cloud,
                &p,
                CrackParams {
                    width: c.tau * rc,
                    jitter: c.sigma * rc,
                    rim: c.rim * rc,
                },
                instr.seed,
            ),
            (Params::Freeform(f), Grounding::Anchors(a)) => {
                let kernels = match &f.kernels {
                    schema::KernelChoice::Explicit(ks) => KernelSpec::Explicit(
                        ks.iter()
                            .map(|k| GaussianKernel {
                                amplitude: k.amplitude * rc,
                                center: [k.center[0] * rc, k.center[1] * rc],
                                sigma: k.sigma * rc,
                            })
                            .collect(),
                    ),
                    schema::KernelChoice::Sampled {
                        count,
                        amplitude,
                        sigma_fraction,
                    } => KernelSpec::Sampled(KernelSampling {
                        count: *count,
                        amplitude: (amplitude[0] * rc, amplitude[1] * rc),
                        sigma_fraction: (sigma_fraction[0], sigma_fraction[1]),
                    }),
                };
                synthesize_freeform(
                    &cloud,
                    &a,
                    &FreeformParams {
                        epsilon: f.epsilon * rc,
                        kernels,
                        smooth_k: f.k_smooth,
                        lambda: f.lambda,
                        h_min: f.h_min * rc,
                    },
                    instr.seed,
                )
            }
            _ => Err(Error::contract("operator and region grounding disagree")),
        }
    };
    let out = run().map_err(|e| e.with_context(&context))?;
    Ok(Execution {
        provenance: Provenance {
            schema_version: SCHEMA_VERSION,
            source: Source::Direct,
            instruction: instr.to_value(),
            scale: profile.radius,
            input_points: cloud.len(),
            output_points: out.cloud.len(),
            mask_points: out.mask.count(),
            removed: out.removed,
            details: out.details,
        },
        cloud: out.cloud,
        mask: out.mask,
    })
}

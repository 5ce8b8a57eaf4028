use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use ftfi::topmask::{
    grid_mst, linear_attention, masked_attention_explicit, masked_attention_fast, AttentionInputs, FeatureMap,
    MaskLink, TopologicalMask, EXPLICIT_GUARD,
};
use ftfi::FtfiError;

use crate::common::{emit_json, parse_pair, CliResult, Failure, SCHEMA_VERSION};

fn parse_phi(s: &str) -> Result<FeatureMap, String> {
    s.parse().map_err(|e: FtfiError| e.to_string())
}

fn parse_link(s: &str) -> Result<MaskLink, String> {
    s.parse().map_err(|e: FtfiError| e.to_string())
}

#[derive(Args, Debug)]
pub struct AttentionArgs {
    /// Token grid `h,w`.
    #[arg(long, value_parser = parse_pair::<usize>, default_value = "8,8")]
    pub grid: (usize, usize),
    /// Feature map: relu, square, fourth or exp.
    #[arg(long, value_parser = parse_phi, default_value = "square")]
    pub phi: FeatureMap,
    /// Mask link: exp for exp(p(x)) or recip for 1 / p(x).
    #[arg(long, value_parser = parse_link, default_value = "exp")]
    pub g: MaskLink,
    /// Degree of the polynomial p; inferred from --coeffs when given.
    #[arg(long)]
    pub t: Option<usize>,
    /// Coefficients a_0,...,a_t of p. Defaults to p(x) = -x/2 for exp and
    /// p(x) = 1 + x/2 for recip, padded with zeros up to degree t.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub coeffs: Option<Vec<f64>>,
    #[arg(long, default_value_t = 8)]
    pub d_qk: usize,
    #[arg(long, default_value_t = 4)]
    pub d_v: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run the explicit reference above 4096 tokens.
    #[arg(long)]
    pub force_dense: bool,
    /// Output JSON; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `max |a - b| / max |b|`.
fn max_rel_deviation(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = b.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn coefficients(a: &AttentionArgs) -> CliResult<Vec<f64>> {
    match (&a.coeffs, a.t) {
        (Some(c), Some(t)) if c.len() != t + 1 => {
            Err(Failure::precondition(format!("--t {t} needs {} coefficients, got {}", t + 1, c.len())))
        }
        (Some(c), _) => Ok(c.clone()),
        (None, t) => {
            let mut c = vec![0.0; t.unwrap_or(1) + 1];
            match a.g {
                MaskLink::Exp => {
                    if c.len() > 1 {
                        c[1] = -0.5;
                    }
                }
                MaskLink::Reciprocal => {
                    c[0] = 1.0;
                    if c.len() > 1 {
                        c[1] = 0.5;
                    }
                }
            }
            Ok(c)
        }
    }
}

pub fn run(a: &AttentionArgs) -> CliResult<()> {
    let (h, w) = a.grid;
    if h == 0 || w == 0 {
        return Err(Failure::precondition("grid dimensions must be positive"));
    }
    let coeffs = coefficients(a)?;
    let l = h * w;
    let inputs = AttentionInputs::random(l, a.d_qk, a.d_v, a.phi, &mut ChaCha8Rng::seed_from_u64(a.seed));

    let t0 = Instant::now();
    let mask = TopologicalMask::new(grid_mst(h, w)?, a.g, coeffs.clone())?;
    let preprocess_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let fast = masked_attention_fast(&inputs, &mask)?;
    let fast_seconds = t1.elapsed().as_secs_f64();

    let (explicit_seconds, deviation) = if l <= EXPLICIT_GUARD || a.force_dense {
        let t2 = Instant::now();
        let explicit = masked_attention_explicit(&inputs, &mask.mask_matrix()?)?;
        (Some(t2.elapsed().as_secs_f64()), Some(max_rel_deviation(&fast, &explicit)))
    } else {
        eprintln!("warning: {l} tokens exceed {EXPLICIT_GUARD}; explicit reference skipped (use --force-dense)");
        (None, None)
    };
    let unmasked = linear_attention(&inputs)?;
    emit_json(
        a.out.as_deref(),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "attention-demo",
            "grid": [h, w],
            "tokens": l,
            "phi": a.phi.to_string(),
            "g": match a.g { MaskLink::Exp => "exp", MaskLink::Reciprocal => "recip" },
            "coeffs": coeffs,
            "seed": a.seed,
            "preprocess_seconds": preprocess_seconds,
            "fast_seconds": fast_seconds,
            "explicit_seconds": explicit_seconds,
            "max_rel_deviation": deviation,
            "deviation_from_unmasked": max_rel_deviation(&fast, &unmasked),
        }),
    )
}

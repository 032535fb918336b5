//! Machine-readable report rendering.
//!
//! All artifacts carry a reproducibility header (tool version, seed, sample
//! count, config hash) as `#`-prefixed lines before the CSV header. Floats
//! are written with Rust's shortest-roundtrip formatting, so re-running with
//! identical inputs reproduces outputs byte for byte whatever the worker
//! count.

use crate::h_construct::HFunction;
use crate::ruin::RuinSweepRow;
use crate::tail_classes::RatioProfile;
use crate::weighted_sums::{EquivalenceReport, ShiftCheckPoint};

/// Reproducibility header embedded in every artifact.
#[derive(Debug, Clone, Default)]
pub struct ReportHeader {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub samples: Option<u64>,
}

impl ReportHeader {
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("# tool_version={}\n", self.tool_version));
        if !self.config_hash.is_empty() {
            s.push_str(&format!("# config_hash={}\n", self.config_hash));
        }
        if let Some(seed) = self.seed {
            s.push_str(&format!("# seed={seed}\n"));
        }
        if let Some(samples) = self.samples {
            s.push_str(&format!("# samples={samples}\n"));
        }
        s
    }
}

pub fn ratio_profile_csv(header: &ReportHeader, profile: &RatioProfile) -> String {
    let mut s = header.render();
    s.push_str("x,ratio,running_sup\n");
    for i in 0..profile.xs.len() {
        s.push_str(&format!(
            "{},{},{}\n",
            profile.xs[i], profile.ratios[i], profile.running_sup[i]
        ));
    }
    s
}

/// Evaluation table for a constructed h: x, h(x), and the weight band.
pub fn h_table_csv<H: HFunction>(
    header: &ReportHeader,
    h: &H,
    delta: f64,
    xs: &[f64],
) -> String {
    let mut s = header.render();
    s.push_str("x,h,a,b\n");
    for &x in xs {
        let hx = h.eval(x);
        let band = crate::h_construct::WeightBand::from_h(hx, delta);
        s.push_str(&format!("{},{},{},{}\n", x, hx, band.lower, band.upper));
    }
    s
}

pub fn equivalence_csv(header: &ReportHeader, report: &EquivalenceReport) -> String {
    let mut s = header.render();
    s.push_str(
        "x,est_S,se_S,est_M,se_M,est_Splus,se_Splus,bigjump,\
         ratio_S_M,se_ratio_S_M,ratio_M_Splus,se_ratio_M_Splus,\
         ratio_S_bigjump,se_ratio_S_bigjump,within_tolerance\n",
    );
    for r in &report.rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.x,
            r.est_sum,
            r.se_sum,
            r.est_max,
            r.se_max,
            r.est_pos,
            r.se_pos,
            r.big_jump,
            r.ratio_sum_max.0,
            r.ratio_sum_max.1,
            r.ratio_max_pos.0,
            r.ratio_max_pos.1,
            r.ratio_sum_bigjump.0,
            r.ratio_sum_bigjump.1,
            r.within_tolerance,
        ));
    }
    s
}

pub fn shift_check_csv(header: &ReportHeader, points: &[ShiftCheckPoint]) -> String {
    let mut s = header.render();
    s.push_str("x,h,band_lower,band_upper,max_deviation,ratio_error,weights_probed\n");
    for p in points {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.x, p.h, p.band.lower, p.band.upper, p.max_deviation, p.ratio_error, p.weights_probed
        ));
    }
    s
}

pub fn ruin_sweep_csv(header: &ReportHeader, rows: &[RuinSweepRow]) -> String {
    let mut s = header.render();
    s.push_str("x,psi_hat,se,psi_asym,ratio\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.x, r.psi_hat, r.se, r.psi_asym, r.ratio
        ));
    }
    s
}

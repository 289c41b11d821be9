//! Machine-readable outputs: fixed-format CSV reports, JSON summaries, and
//! the configuration fingerprint.
//!
//! Floats are printed in C's `%.12e` shape — twelve fractional digits, a
//! signed exponent of at least two digits — so identical inputs produce
//! byte-identical files. The only column exempt from that promise is the
//! wall-time column of the sweep report, which is honest and therefore
//! nondeterministic.

use crate::fem::GridField;
use crate::harness::{LimitTestResult, SweepOutcome};
use crate::homogenize::HomogenizedData;
use crate::problems::{MacroSolution, MicroSolution};

/// Formats a finite float exactly like C's `printf("%.12e", x)`.
pub fn fmt_e12(x: f64) -> String {
    debug_assert!(x.is_finite(), "report values must be finite, got {x}");
    let s = format!("{x:.12e}");
    let (mant, exp) = s.split_once('e').expect("scientific format carries an exponent");
    let (sign, digits) = match exp.strip_prefix('-') {
        Some(d) => ('-', d),
        None => ('+', exp),
    };
    format!("{mant}e{sign}{digits:0>2}")
}

/// FNV-1a 64-bit hash, used to fingerprint the configuration text.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// The sweep report: two comment lines carrying the provenance (config
/// fingerprint, effective data), then the fixed column set.
pub fn sweep_csv(outcome: &SweepOutcome, config_hash: u64) -> String {
    let a = &outcome.hom.a_hom.0;
    let src = &outcome.source;
    let mut out = format!("# config={config_hash:016x}\n");
    out.push_str(&format!(
        "# a_hom=[[{},{}],[{},{}]] vol_frac=[{},{}] i_gamma={} f1={} f2={}\n",
        fmt_e12(a[0][0]),
        fmt_e12(a[0][1]),
        fmt_e12(a[1][0]),
        fmt_e12(a[1][1]),
        fmt_e12(src.vol_frac[0]),
        fmt_e12(src.vol_frac[1]),
        fmt_e12(src.i_gamma),
        src.f1,
        src.f2,
    ));
    out.push_str("eps,h,l2_err,l2_rel,h1_corr_err,h1_norm,iters,seconds\n");
    for row in &outcome.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_e12(row.eps),
            fmt_e12(row.h),
            fmt_e12(row.l2_err),
            fmt_e12(row.l2_rel),
            fmt_e12(row.h1_corr_err),
            fmt_e12(row.h1_norm),
            row.iters,
            fmt_e12(row.seconds),
        ));
    }
    out
}

/// Nodal field dump: one row per node, row-major from the origin.
pub fn field_csv(field: &GridField) -> String {
    let np = field.cells_per_side() + 1;
    let mut out = String::with_capacity(np * np * 60 + 16);
    out.push_str("x1,x2,value\n");
    let h = field.h();
    for iy in 0..np {
        for ix in 0..np {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_e12(ix as f64 * h),
                fmt_e12(iy as f64 * h),
                fmt_e12(field.values()[iy * np + ix]),
            ));
        }
    }
    out
}

/// Corrector dump: both correctors side by side over the cell grid.
pub fn correctors_csv(hom: &HomogenizedData) -> String {
    let np = hom.m + 1;
    let h = 1.0 / hom.m as f64;
    let mut out = String::with_capacity(np * np * 80 + 16);
    out.push_str("node,y1,y2,w1,w2\n");
    for iy in 0..np {
        for ix in 0..np {
            let node = iy * np + ix;
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                node,
                fmt_e12(ix as f64 * h),
                fmt_e12(iy as f64 * h),
                fmt_e12(hom.correctors[0].values()[node]),
                fmt_e12(hom.correctors[1].values()[node]),
            ));
        }
    }
    out
}

/// `ahom.json`: the effective data in one object.
pub fn ahom_json(hom: &HomogenizedData) -> String {
    let v = serde_json::json!({
        "A_hom": hom.a_hom.0,
        "I_gamma": hom.i_gamma,
        "vol_frac": hom.vol_frac,
        "m": hom.m,
    });
    format!("{v:#}\n")
}

/// Per-solve JSON summary for the micro subcommand.
pub fn micro_summary_json(sol: &MicroSolution) -> String {
    let v = serde_json::json!({
        "eps": sol.eps,
        "h": sol.h,
        "h1_norm": sol.h1_norm,
        "l2_norm": sol.l2_norm,
        "iters": sol.info.iterations,
        "residual": sol.info.residual,
    });
    format!("{v:#}\n")
}

/// Per-solve JSON summary for the macro subcommand.
pub fn macro_summary_json(sol: &MacroSolution) -> String {
    let v = serde_json::json!({
        "h": sol.h,
        "h1_norm": sol.field.h1_norm(),
        "l2_norm": sol.field.l2_norm(),
        "iters": sol.info.iterations,
        "residual": sol.info.residual,
        "a_hom": sol.a_hom.0,
        "i_gamma": sol.source.i_gamma,
        "vol_frac": sol.source.vol_frac,
    });
    format!("{v:#}\n")
}

/// `limits.json`: every limit functional with its trail of values.
pub fn limits_json(results: &[LimitTestResult]) -> String {
    let items: Vec<serde_json::Value> = results
        .iter()
        .map(|r| {
            serde_json::json!({
                "id": r.id,
                "eps": r.eps,
                "values": r.values,
                "extrapolated": r.extrapolated,
                "reference": r.reference,
                "gap": r.gap,
                "reliable": r.reliable,
            })
        })
        .collect();
    format!("{:#}\n", serde_json::Value::Array(items))
}

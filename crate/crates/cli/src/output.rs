//! CSV writers with a frozen schema. Floats carry 17 significant digits and
//! zero is written as `0`, so reruns compare byte for byte.

use std::fs;
use std::io::Write;
use std::path::Path;

use mhd_core::diagnostics::DiagnosticsRecord;
use mhd_core::mms::ErrorTable;

use crate::CliError;

pub const TIMESERIES_HEADER: [&str; 12] = [
    "step",
    "time",
    "energy",
    "hm",
    "hc",
    "div_b_l2",
    "div_b_max",
    "res_energy",
    "res_hm",
    "res_hc",
    "picard_iters",
    "inner_iters",
];

pub const ERROR_TABLE_HEADER: [&str; 7] = ["h", "err_b", "order_b", "err_u", "order_u", "err_p", "order_p"];

pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn csv_err(e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::Io(io),
        other => CliError::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn write_timeseries(out: impl Write, records: &[DiagnosticsRecord]) -> Result<(), CliError> {
    let mut w = writer(out);
    w.write_record(TIMESERIES_HEADER).map_err(csv_err)?;
    for r in records {
        let floats = [
            r.time,
            r.energy,
            r.helicity_magnetic,
            r.helicity_cross,
            r.div_b_l2,
            r.div_b_max,
            r.energy_identity_residual,
            r.hm_identity_residual,
            r.hc_identity_residual,
        ];
        let mut row = vec![r.step.to_string()];
        row.extend(floats.into_iter().map(format_float));
        row.push(r.picard_iters.to_string());
        row.push(r.inner_iters.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Orders of the first row are left empty.
pub fn write_error_table(out: impl Write, table: &ErrorTable) -> Result<(), CliError> {
    let mut w = writer(out);
    w.write_record(ERROR_TABLE_HEADER).map_err(csv_err)?;
    let order = |o: Option<f64>| o.map(format_float).unwrap_or_default();
    for r in &table.rows {
        let row = [
            format_float(r.h),
            format_float(r.err_b),
            order(r.order_b),
            format_float(r.err_u),
            order(r.order_u),
            format_float(r.err_p),
            order(r.order_p),
        ];
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `path` through a temporary file, so readers never
/// see a half-written file.
pub fn write_file(path: &Path, write: impl FnOnce(&mut fs::File) -> Result<(), CliError>) -> Result<(), CliError> {
    let tmp = path.with_extension("partial");
    let mut f = fs::File::create(&tmp)?;
    write(&mut f)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path)?;
    Ok(())
}

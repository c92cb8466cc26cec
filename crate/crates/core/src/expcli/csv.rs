use std::io::Write;

use super::runner::SweepRow;
use crate::error::Result;

pub const CSV_HEADER: &str =
    "scheme,criterion,snr_db,sigma_e2,esr,common_part,private_part,stderr,mean_delta,branch_histogram";

fn histogram(counts: &[(usize, usize)]) -> String {
    counts
        .iter()
        .map(|(l, n)| format!("{l}:{n}"))
        .collect::<Vec<_>>()
        .join("|")
}

/// One CSV line (without the trailing newline).
///
/// Floats use the shortest representation that round-trips exactly.
pub fn format_row(row: &SweepRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        row.scheme,
        row.criterion,
        row.snr_db,
        row.sigma_e2,
        row.esr,
        row.common_part,
        row.private_part,
        row.stderr,
        row.mean_delta,
        histogram(&row.branch_histogram)
    )
}

pub fn write_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", format_row(row))?;
    }
    out.flush()?;
    Ok(())
}

use std::fmt::Write as _;
use std::path::Path;

use crate::Result;

/// Header of every result file.
pub const RESULT_HEADER: &str = "run_id,z,t,level,entropy,envelope,ratio,verdict";

/// Round-trippable float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

/// One sample of an envelope comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub run_id: String,
    pub z: f64,
    pub t: f64,
    pub level: usize,
    pub entropy: f64,
    pub envelope: f64,
    pub ratio: f64,
    pub pass: bool,
}

impl ResultRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.run_id,
            fmt_f64(self.z),
            fmt_f64(self.t),
            self.level,
            fmt_f64(self.entropy),
            fmt_f64(self.envelope),
            fmt_f64(self.ratio),
            verdict(self.pass)
        )
    }
}

/// Renders result rows; a `# seed=` comment precedes the header when data were random.
pub fn render_results(seed: Option<u64>, rows: &[ResultRow]) -> String {
    let mut s = String::new();
    if let Some(seed) = seed {
        writeln!(s, "# seed={seed}").unwrap();
    }
    writeln!(s, "{RESULT_HEADER}").unwrap();
    for r in rows {
        writeln!(s, "{}", r.to_csv()).unwrap();
    }
    s
}

/// Renders an arbitrary table with a header line.
pub fn render_table(header: &str, rows: &[Vec<String>]) -> String {
    let mut s = String::new();
    writeln!(s, "{header}").unwrap();
    for r in rows {
        writeln!(s, "{}", r.join(",")).unwrap();
    }
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

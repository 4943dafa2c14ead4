//! CSV output. Numbers use the shortest decimal form that parses back to
//! the same `f64`.

use std::io::{self, Write};

use crate::path::PathSample;
use crate::shift::CylinderFunction;

/// Shortest round-trip decimal representation.
pub fn format_number(x: f64) -> String {
    format!("{x}")
}

/// `word,value` rows in lexicographic word order.
pub fn write_function_csv(out: &mut impl Write, f: &CylinderFunction) -> io::Result<()> {
    writeln!(out, "word,value")?;
    for (w, v) in f.entries() {
        writeln!(out, "{w},{}", format_number(v))?;
    }
    Ok(())
}

pub fn function_csv(f: &CylinderFunction) -> String {
    let mut buf = Vec::new();
    write_function_csv(&mut buf, f).expect("writing to memory");
    String::from_utf8(buf).expect("ascii")
}

/// `sample_id,base_word,prepends`; prepends are listed in the order they
/// were drawn.
pub fn write_samples_csv(out: &mut impl Write, samples: &[PathSample]) -> io::Result<()> {
    writeln!(out, "sample_id,base_word,prepends")?;
    for (i, s) in samples.iter().enumerate() {
        writeln!(out, "{i},{},{}", s.base, s.prepends_string())?;
    }
    Ok(())
}

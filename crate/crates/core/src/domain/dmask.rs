//! `DMASK 1` text format.
//!
//! ```text
//! DMASK 1
//! <dim> <h>
//! <n_0> <n_1> [<n_2>]
//! <row-major 0/1 characters>
//! ```
//!
//! In 2D the grid is a single block of `n_0` lines of `n_1` characters. In 3D
//! there are `n_0` blocks of `n_1` lines of `n_2` characters, separated by
//! blank lines. `h` is written in shortest round-trip form.

use super::GridDomain;
use crate::error::{Error, Result};

pub fn write_dmask(domain: &GridDomain) -> String {
    let shape = domain.shape();
    let dim = domain.dim();
    let mut out = String::with_capacity(domain.n_cells() + shape.iter().sum::<usize>() + 64);
    out.push_str("DMASK 1\n");
    out.push_str(&format!("{} {}\n", dim, domain.spacing()));
    let counts: Vec<String> = shape.iter().map(|n| n.to_string()).collect();
    out.push_str(&counts.join(" "));
    out.push('\n');
    let (blocks, rows, cols) = if dim == 2 {
        (1, shape[0], shape[1])
    } else {
        (shape[0], shape[1], shape[2])
    };
    let mask = domain.mask();
    for b in 0..blocks {
        if b > 0 {
            out.push('\n');
        }
        for r in 0..rows {
            let start = (b * rows + r) * cols;
            out.extend(mask[start..start + cols].iter().map(|&m| if m { '1' } else { '0' }));
            out.push('\n');
        }
    }
    out
}

pub fn read_dmask(text: &str) -> Result<GridDomain> {
    let mut lines = text.lines();
    let bad = |msg: &str| Error::Parse(format!("DMASK: {msg}"));
    if lines.next() != Some("DMASK 1") {
        return Err(bad("missing `DMASK 1` header"));
    }
    let params = lines.next().ok_or_else(|| bad("missing `dim h` line"))?;
    let mut it = params.split_whitespace();
    let dim: usize = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad dimension"))?;
    let h: f64 = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad spacing"))?;
    if it.next().is_some() || !(dim == 2 || dim == 3) {
        return Err(bad("malformed `dim h` line"));
    }
    let shape: Vec<usize> = lines
        .next()
        .ok_or_else(|| bad("missing counts line"))?
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| bad("bad cell count")))
        .collect::<Result<_>>()?;
    if shape.len() != dim {
        return Err(bad("counts do not match dimension"));
    }
    let (blocks, rows, cols) = if dim == 2 {
        (1, shape[0], shape[1])
    } else {
        (shape[0], shape[1], shape[2])
    };
    let mut mask = Vec::with_capacity(blocks * rows * cols);
    for b in 0..blocks {
        if b > 0 && lines.next() != Some("") {
            return Err(bad("missing blank separator between blocks"));
        }
        for _ in 0..rows {
            let line = lines.next().ok_or_else(|| bad("truncated mask"))?;
            if line.len() != cols {
                return Err(bad("row length does not match counts"));
            }
            for ch in line.chars() {
                mask.push(match ch {
                    '0' => false,
                    '1' => true,
                    _ => return Err(bad("mask characters must be 0 or 1")),
                });
            }
        }
    }
    if lines.any(|l| !l.is_empty()) {
        return Err(bad("trailing content after mask"));
    }
    GridDomain::new(dim, shape, h, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_ball, random_blob};
    use proptest::prelude::*;

    #[test]
    fn layout_2d() {
        let mut mask = vec![false; 12];
        mask[5] = true;
        let d = GridDomain::new(2, vec![3, 4], 0.5, mask).unwrap();
        assert_eq!(write_dmask(&d), "DMASK 1\n2 0.5\n3 4\n0000\n0100\n0000\n");
    }

    #[test]
    fn layout_3d_blocks() {
        let d = make_ball(3, 0.04, 0.01).unwrap();
        let text = write_dmask(&d);
        let n = d.shape()[0];
        // n blocks, separated by n - 1 blank lines.
        assert_eq!(text.matches("\n\n").count(), n - 1);
        assert_eq!(read_dmask(&text).unwrap(), d);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_dmask("DMASK 2\n").is_err());
        assert!(read_dmask("DMASK 1\n2 0.5\n3 3\n000\n020\n000\n").is_err());
        assert!(read_dmask("DMASK 1\n2 0.5\n3 3\n000\n010\n").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn roundtrip_is_bit_exact(seed in 0u64..1000, dim in 2usize..=3, inv_h in 20u32..40) {
            let h = 1.0 / inv_h as f64;
            if let Ok(d) = random_blob(seed, dim, h) {
                let text = write_dmask(&d);
                let back = read_dmask(&text).unwrap();
                prop_assert_eq!(back.spacing().to_bits(), d.spacing().to_bits());
                prop_assert_eq!(write_dmask(&back), text);
            }
        }
    }
}

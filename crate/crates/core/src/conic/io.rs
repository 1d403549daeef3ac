//! Plain-text sparse-triplet dump of a [`ConicProblem`], for debugging.
//!
//! ```text
//! conic 1
//! dims <n> <m>
//! cones <zero> <nonneg> soc <k> <q_1> .. <q_k> psd <r> <d_1> .. <d_r>
//! c <count>
//! <j> <value>
//! b <count>
//! <i> <value>
//! A <nnz>
//! <i> <j> <value>
//! ```
//! Only nonzero entries of `c` and `b` are listed. Values use 17
//! significant digits so a dump/load round trip is exact.

use std::fmt::Write as _;

use super::cones::ConeSpec;
use super::sparse::CscMatrix;
use super::ConicProblem;
use crate::error::{Error, Result};

pub fn dump(prob: &ConicProblem) -> String {
    let mut out = String::new();
    let k = &prob.cones;
    let _ = writeln!(out, "conic 1");
    let _ = writeln!(out, "dims {} {}", prob.n(), prob.m());
    let soc: Vec<String> = k.soc.iter().map(|q| q.to_string()).collect();
    let psd: Vec<String> = k.psd.iter().map(|d| d.to_string()).collect();
    let _ = writeln!(
        out,
        "cones {} {} soc {} {} psd {} {}",
        k.zero,
        k.nonneg,
        k.soc.len(),
        soc.join(" "),
        k.psd.len(),
        psd.join(" ")
    );
    write_vector(&mut out, "c", &prob.c);
    write_vector(&mut out, "b", &prob.b);
    let trip = prob.a.triplets();
    let _ = writeln!(out, "A {}", trip.len());
    for (i, j, v) in trip {
        let _ = writeln!(out, "{i} {j} {v:.16e}");
    }
    out
}

fn write_vector(out: &mut String, tag: &str, v: &[f64]) {
    let nz: Vec<(usize, f64)> = v.iter().copied().enumerate().filter(|p| p.1 != 0.0).collect();
    let _ = writeln!(out, "{tag} {}", nz.len());
    for (i, x) in nz {
        let _ = writeln!(out, "{i} {x:.16e}");
    }
}

pub fn load(text: &str) -> Result<ConicProblem> {
    let mut tokens = text.split_whitespace();
    let mut next = |what: &str| tokens.next().ok_or_else(|| Error::Parse(format!("missing {what}")));
    fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
        s.parse().map_err(|_| Error::Parse(format!("bad number '{s}'")))
    }
    expect(next("header")?, "conic")?;
    let _version: usize = num(next("version")?)?;
    expect(next("dims")?, "dims")?;
    let n: usize = num(next("n")?)?;
    let m: usize = num(next("m")?)?;
    expect(next("cones")?, "cones")?;
    let zero = num(next("zero")?)?;
    let nonneg = num(next("nonneg")?)?;
    expect(next("soc")?, "soc")?;
    let ks: usize = num(next("soc count")?)?;
    let mut soc = Vec::with_capacity(ks);
    for _ in 0..ks {
        soc.push(num(next("soc dim")?)?);
    }
    expect(next("psd")?, "psd")?;
    let kp: usize = num(next("psd count")?)?;
    let mut psd = Vec::with_capacity(kp);
    for _ in 0..kp {
        psd.push(num(next("psd dim")?)?);
    }
    let mut read_vec = |tag: &str, len: usize| -> Result<Vec<f64>> {
        expect(next(tag)?, tag)?;
        let count: usize = num(next("count")?)?;
        let mut v = vec![0.0; len];
        for _ in 0..count {
            let i: usize = num(next("index")?)?;
            if i >= len {
                return Err(Error::Parse(format!("{tag} index {i} out of range")));
            }
            v[i] = num(next("value")?)?;
        }
        Ok(v)
    };
    let c = read_vec("c", n)?;
    let b = read_vec("b", m)?;
    expect(next("A")?, "A")?;
    let nnz: usize = num(next("nnz")?)?;
    let mut trip = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        let i: usize = num(next("row")?)?;
        let j: usize = num(next("col")?)?;
        let v: f64 = num(next("value")?)?;
        if i >= m || j >= n {
            return Err(Error::Parse(format!("entry ({i}, {j}) out of range")));
        }
        trip.push((i, j, v));
    }
    let cones = ConeSpec { zero, nonneg, soc, psd };
    if cones.rows() != m {
        return Err(Error::Parse("cone rows do not add up to m".into()));
    }
    Ok(ConicProblem { a: CscMatrix::from_triplets(m, n, &trip), b, c, cones })
}

fn expect(tok: &str, want: &str) -> Result<()> {
    if tok == want {
        Ok(())
    } else {
        Err(Error::Parse(format!("expected '{want}', found '{tok}'")))
    }
}

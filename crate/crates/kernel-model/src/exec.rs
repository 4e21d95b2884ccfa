use crate::partition::KernelPartition;
use crate::KernelError;

fn check(name: &'static str, got: usize, need: usize) -> Result<(), KernelError> {
    if got < need {
        return Err(KernelError::OperandSize { name, got, need });
    }
    Ok(())
}

#[inline]
fn accumulate_block(
    flt: &[f64],
    inp: &[f64],
    out: &mut [f64],
    (k, n, c): (usize, usize, usize),
    k_range: std::ops::Range<usize>,
    n_range: std::ops::Range<usize>,
) {
    for kk in k_range {
        for nn in n_range.clone() {
            let mut acc = out[kk * n + nn];
            for cc in 0..c {
                acc += flt[cc * k + kk] * inp[cc * n + nn];
            }
            out[kk * n + nn] = acc;
        }
    }
}

/// `out[k, n] += Σ_c flt[c, k] · in[c, n]` with `flt` stored `C × K`,
/// `in` stored `C × N` and `out` stored `K × N`, all row-major. The
/// reduction runs in ascending `c` for every output element.
pub fn microkernel_exec(
    flt: &[f64],
    inp: &[f64],
    out: &mut [f64],
    k: usize,
    n: usize,
    c: usize,
) -> Result<(), KernelError> {
    check("flt", flt.len(), c * k)?;
    check("in", inp.len(), c * n)?;
    check("out", out.len(), k * n)?;
    accumulate_block(flt, inp, out, (k, n, c), 0..k, 0..n);
    Ok(())
}

/// Same product, executed part by part and tile by tile as the assembly
/// kernels would. Bitwise identical to [`microkernel_exec`].
pub fn microkernel_exec_partitioned(
    partition: &KernelPartition,
    flt: &[f64],
    inp: &[f64],
    out: &mut [f64],
    c: usize,
) -> Result<(), KernelError> {
    let (k, n) = (partition.k, partition.n);
    check("flt", flt.len(), c * k)?;
    check("in", inp.len(), c * n)?;
    check("out", out.len(), k * n)?;
    for part in &partition.parts {
        for tk in (part.k0..part.k0 + part.k_len).step_by(part.kr) {
            for tn in (part.n0..part.n0 + part.n_len).step_by(part.nr) {
                accumulate_block(flt, inp, out, (k, n, c), tk..tk + part.kr, tn..tn + part.nr);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_update() {
        let flt = [2.0, -1.0];
        let inp = [1.0, 0.5, 0.25, 4.0];
        let mut out = [1.0; 8];
        microkernel_exec(&flt, &inp, &mut out, 2, 4, 1).unwrap();
        assert_eq!(out, [3.0, 2.0, 1.5, 9.0, 0.0, 0.5, 0.75, -3.0]);
    }

    #[test]
    fn short_operands_rejected() {
        let mut out = [0.0; 4];
        assert!(microkernel_exec(&[0.0; 3], &[0.0; 4], &mut out, 1, 4, 4).is_err());
    }
}

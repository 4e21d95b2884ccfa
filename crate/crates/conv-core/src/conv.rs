use crate::error::ConvError;
use crate::shape::ConvShape;
use crate::tensor::{Layout, MatrixView, MatrixViewMut, Tensor4};

/// Seven-loop reference convolution.
///
/// Each output element is accumulated in `f64` over `ic`, then `fh`, then
/// `fw`, and rounded to `f32` once. Taps that land in the padding contribute
/// nothing.
pub fn direct_conv(input: &Tensor4, filter: &Tensor4, shape: &ConvShape) -> Result<Tensor4, ConvError> {
    input.check_shape(Layout::In, shape)?;
    filter.check_shape(Layout::Flt, shape)?;
    let mut out = Tensor4::zeros_for(Layout::Out, shape);
    for oh in 0..shape.out_h {
        for ow in 0..shape.out_w {
            for oc in 0..shape.oc {
                for b in 0..shape.b {
                    let mut acc = 0.0f64;
                    for ic in 0..shape.ic {
                        for fh in 0..shape.flt_h {
                            for fw in 0..shape.flt_w {
                                if let Some((ih, iw)) = shape.input_coord(oh, ow, fh, fw) {
                                    acc += input.get(ih, iw, ic, b) as f64 * filter.get(fh, fw, ic, oc) as f64;
                                }
                            }
                        }
                    }
                    out.set(oh, ow, oc, b, acc as f32);
                }
            }
        }
    }
    Ok(out)
}

/// `out[oc, b] += Σ_ic flt[ic, oc] · in[ic, b]`, accumulated in `f64` in
/// ascending `ic` order starting from the current `out` value.
pub fn mm_unit(flt: &MatrixView<'_>, input: &MatrixView<'_>, out: &mut MatrixViewMut<'_>) -> Result<(), ConvError> {
    let (ic, oc, b) = (flt.rows(), flt.cols(), input.cols());
    if input.rows() != ic || out.rows() != oc || out.cols() != b {
        return Err(ConvError::DimMismatch(format!(
            "flt {}x{}, in {}x{}, out {}x{}",
            flt.rows(),
            flt.cols(),
            input.rows(),
            input.cols(),
            out.rows(),
            out.cols()
        )));
    }
    for o in 0..oc {
        for n in 0..b {
            let mut acc = out.at(o, n) as f64;
            for c in 0..ic {
                acc += flt.at(c, o) as f64 * input.at(c, n) as f64;
            }
            out.set(o, n, acc as f32);
        }
    }
    Ok(())
}

/// Convolution as a four-level loop over `(oh, ow, fh, fw)` issuing one
/// [`mm_unit`] per in-bounds tap.
pub fn conv_via_mm(input: &Tensor4, filter: &Tensor4, shape: &ConvShape) -> Result<Tensor4, ConvError> {
    input.check_shape(Layout::In, shape)?;
    filter.check_shape(Layout::Flt, shape)?;
    let mut out = Tensor4::zeros_for(Layout::Out, shape);
    for oh in 0..shape.out_h {
        for ow in 0..shape.out_w {
            let mut out_mtx = out.view_mut(oh, ow).expect("output position in range");
            for fh in 0..shape.flt_h {
                for fw in 0..shape.flt_w {
                    let Some((ih, iw)) = shape.input_coord(oh, ow, fh, fw) else {
                        continue;
                    };
                    let flt_mtx = filter.view(fh, fw).expect("filter tap in range");
                    let in_mtx = input.view(ih, iw).expect("input coordinate checked");
                    mm_unit(&flt_mtx, &in_mtx, &mut out_mtx)?;
                }
            }
        }
    }
    Ok(out)
}

/// Floating-point operations of the convolution, counting only taps that
/// read real (non-padding) input.
pub fn conv_flops(shape: &ConvShape) -> u64 {
    let mut taps = 0u64;
    for oh in 0..shape.out_h {
        for ow in 0..shape.out_w {
            for fh in 0..shape.flt_h {
                for fw in 0..shape.flt_w {
                    if shape.input_coord(oh, ow, fh, fw).is_some() {
                        taps += 1;
                    }
                }
            }
        }
    }
    2 * shape.b as u64 * shape.ic as u64 * shape.oc as u64 * taps
}

/// `max |a - r| / max |r|`: error relative to the reference's largest
/// magnitude. Falls back to absolute error for an all-zero reference.
pub fn max_rel_err(actual: &[f32], reference: &[f32]) -> f64 {
    assert_eq!(actual.len(), reference.len(), "compared buffers differ in length");
    let scale = reference.iter().fold(0.0f64, |m, &r| m.max((r as f64).abs()));
    let diff = actual
        .iter()
        .zip(reference)
        .fold(0.0f64, |m, (&a, &r)| m.max((a as f64 - r as f64).abs()));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::ConvParams;

    fn shape(b: i64, ic: i64, oc: i64, in_size: i64, flt: i64, pad: i64, stride: i64) -> ConvShape {
        ConvShape::new(ConvParams::square(b, ic, oc, in_size, flt, pad, stride)).unwrap()
    }

    #[test]
    fn single_multiply() {
        let s = shape(1, 1, 1, 1, 1, 0, 1);
        let input = Tensor4::from_vec(Layout::In, [1, 1, 1, 1], vec![2.0]).unwrap();
        let filter = Tensor4::from_vec(Layout::Flt, [1, 1, 1, 1], vec![3.0]).unwrap();
        assert_eq!(direct_conv(&input, &filter, &s).unwrap().data(), &[6.0]);
        assert_eq!(conv_via_mm(&input, &filter, &s).unwrap().data(), &[6.0]);
    }

    #[test]
    fn zero_filter_gives_zero_output() {
        let s = shape(2, 3, 4, 6, 3, 1, 1);
        let input = Tensor4::random(Layout::In, s.in_dims(), 1);
        let filter = Tensor4::zeros_for(Layout::Flt, &s);
        let out = direct_conv(&input, &filter, &s).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let s = shape(2, 3, 4, 6, 3, 0, 1);
        let input = Tensor4::zeros(Layout::In, [6, 6, 3, 1]);
        let filter = Tensor4::zeros_for(Layout::Flt, &s);
        assert!(matches!(direct_conv(&input, &filter, &s), Err(ConvError::ShapeMismatch { .. })));
        assert!(matches!(conv_via_mm(&input, &filter, &s), Err(ConvError::ShapeMismatch { .. })));
    }

    #[test]
    fn mm_unit_outer_product_and_identity() {
        let flt = [1.5f32, -2.0];
        let inp = [4.0f32, 0.5, 1.0];
        let mut out = vec![1.0f32; 6];
        let f = MatrixView::new(&flt, 1, 2).unwrap();
        let i = MatrixView::new(&inp, 1, 3).unwrap();
        mm_unit(&f, &i, &mut MatrixViewMut::new(&mut out, 2, 3).unwrap()).unwrap();
        assert_eq!(out, vec![7.0, 1.75, 2.5, -7.0, 0.0, -1.0]);

        let eye: Vec<f32> = (0..9).map(|k| if k % 4 == 0 { 1.0 } else { 0.0 }).collect();
        let x: Vec<f32> = (0..6).map(|k| k as f32 * 0.25).collect();
        let mut acc = vec![0.5f32; 6];
        mm_unit(
            &MatrixView::new(&eye, 3, 3).unwrap(),
            &MatrixView::new(&x, 3, 2).unwrap(),
            &mut MatrixViewMut::new(&mut acc, 3, 2).unwrap(),
        )
        .unwrap();
        let expected: Vec<f32> = x.iter().map(|v| v + 0.5).collect();
        assert_eq!(acc, expected);
    }

    #[test]
    fn mm_unit_rejects_mismatched_operands() {
        let a = [0.0f32; 6];
        let b = [0.0f32; 8];
        let mut c = [0.0f32; 12];
        let err = mm_unit(
            &MatrixView::new(&a, 2, 3).unwrap(),
            &MatrixView::new(&b, 4, 2).unwrap(),
            &mut MatrixViewMut::new(&mut c, 3, 4).unwrap(),
        );
        assert!(matches!(err, Err(ConvError::DimMismatch(_))));
    }

    #[test]
    fn flops_closed_form_without_padding() {
        let s = shape(1, 1, 1, 1, 1, 0, 1);
        assert_eq!(conv_flops(&s), 2);
        let s = shape(4, 3, 5, 9, 3, 0, 2);
        assert_eq!(
            conv_flops(&s),
            2 * 4 * 3 * 5 * (s.out_h * s.out_w * 9) as u64
        );
    }

    #[test]
    fn max_rel_err_scales_by_reference_peak() {
        assert_eq!(max_rel_err(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((max_rel_err(&[1.0, 2.5], &[1.0, 2.0]) - 0.25).abs() < 1e-12);
        assert_eq!(max_rel_err(&[0.5], &[0.0]), 0.5);
    }
}

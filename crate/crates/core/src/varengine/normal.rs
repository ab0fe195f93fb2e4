//! Standard normal quantile function (Wichura's AS 241, PPND16).
//!
//! Relative accuracy is about 1e-16 over the open unit interval.

use crate::error::{Error, Result};

const SPLIT1: f64 = 0.425;
const SPLIT2: f64 = 5.0;
const CONST1: f64 = 0.180625;
const CONST2: f64 = 1.6;

const A: [f64; 8] = [
    3.387_132_872_796_366_5,
    1.331_416_678_917_843_8e2,
    1.971_590_950_306_551_3e3,
    1.373_169_376_550_946e4,
    4.592_195_393_154_987e4,
    6.726_577_092_700_87e4,
    3.343_057_558_358_813e4,
    2.509_080_928_730_122_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091e1,
    6.871_870_074_920_579e2,
    5.394_196_021_424_751e3,
    2.121_379_430_158_659_7e4,
    3.930_789_580_009_271e4,
    2.872_908_573_572_194_3e4,
    5.226_495_278_852_545e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    2.417_807_251_774_506e-1,
    2.272_384_498_926_918_4e-2,
    7.745_450_142_783_414e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    6.897_673_349_851e-1,
    1.481_039_764_274_800_8e-1,
    1.519_866_656_361_645_7e-2,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    2.965_605_718_285_048_7e-1,
    2.653_218_952_657_612_4e-2,
    1.242_660_947_388_078_4e-3,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_88e-1,
    1.369_298_809_227_358e-1,
    1.487_536_129_085_061_5e-2,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_7e-15,
];

fn poly(c: &[f64; 8], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

/// `Phi^{-1}(p)` for `p` in `(0, 1)`.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!(
            "probability must lie in (0, 1), got {p}"
        )));
    }
    let q = p - 0.5;
    if q.abs() <= SPLIT1 {
        let r = CONST1 - q * q;
        return Ok(q * poly(&A, r) / poly(&B, r));
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let v = if r <= SPLIT2 {
        let r = r - CONST2;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - SPLIT2;
        poly(&E, r) / poly(&F, r)
    };
    Ok(if q < 0.0 { -v } else { v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn tabulated_anchors() {
        assert!((normal_quantile(0.05).unwrap() + 1.644_853_626_951_472_2).abs() < 1e-12);
        assert!((normal_quantile(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-12);
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!((normal_quantile(1e-10).unwrap() + 6.361_340_902_404_056).abs() < 1e-9);
    }

    #[test]
    fn inverts_the_cdf() {
        let n = Normal::standard();
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let x = normal_quantile(p).unwrap();
            assert!((n.cdf(x) - p).abs() < 1e-10, "p = {p}");
            assert!((normal_quantile(1.0 - p).unwrap() + x).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_reference_values() {
        let table = [
            (1e-12, -7.034483825301132),
            (1e-06, -4.753424308822899),
            (0.003, -2.747781385444993),
            (0.01, -2.3263478740408408),
            (0.08, -1.4050715603096322),
            (0.3, -0.5244005127080407),
            (0.77, 0.7388468491852137),
            (0.975, 1.9599639845400536),
            (0.999999, 4.753424308817089),
        ];
        for (p, x) in table {
            let got = normal_quantile(p).unwrap();
            assert!(
                (got - x).abs() <= 4.0 * f64::EPSILON * x.abs(),
                "p = {p}: {got} vs {x}"
            );
        }
    }

    #[test]
    fn rejects_endpoints() {
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }
}

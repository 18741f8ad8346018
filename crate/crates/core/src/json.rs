//! JSON forms shared by the file formats and reports.

use serde::de::{self, Deserializer};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::numkit::{CMatrix, RMatrix, C64};

/// A complex value written as a plain number when real, `{"re", "im"}` otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CValue(pub C64);

impl From<C64> for CValue {
    fn from(z: C64) -> Self {
        CValue(z)
    }
}

impl From<f64> for CValue {
    fn from(x: f64) -> Self {
        CValue(C64::new(x, 0.0))
    }
}

impl Serialize for CValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.im == 0.0 {
            s.serialize_f64(self.0.re)
        } else {
            let mut map = s.serialize_map(Some(2))?;
            map.serialize_entry("re", &self.0.re)?;
            map.serialize_entry("im", &self.0.im)?;
            map.end()
        }
    }
}

impl<'de> Deserialize<'de> for CValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Real(f64),
            Complex { re: f64, im: f64 },
        }
        match Repr::deserialize(d) {
            Ok(Repr::Real(x)) => Ok(CValue(C64::new(x, 0.0))),
            Ok(Repr::Complex { re, im }) => Ok(CValue(C64::new(re, im))),
            Err(_) => Err(de::Error::custom("expected a number or {\"re\", \"im\"}")),
        }
    }
}

/// Row-major nested arrays.
pub fn real_rows(m: &RMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// A matrix that is written as plain rows when real and as separate real and
/// imaginary row arrays otherwise.
#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum MatrixJson {
    Real(Vec<Vec<f64>>),
    Complex { re: Vec<Vec<f64>>, im: Vec<Vec<f64>> },
}

impl MatrixJson {
    pub fn from_complex(m: &CMatrix) -> Self {
        if m.iter().all(|z| z.im == 0.0) {
            MatrixJson::Real(real_rows(&m.map(|z| z.re)))
        } else {
            MatrixJson::Complex {
                re: real_rows(&m.map(|z| z.re)),
                im: real_rows(&m.map(|z| z.im)),
            }
        }
    }

    pub fn from_real(m: &RMatrix) -> Self {
        MatrixJson::Real(real_rows(m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_value_round_trip() {
        let z = CValue(C64::new(-2.0, 7f64.sqrt()));
        let text = serde_json::to_string(&z).unwrap();
        assert_eq!(serde_json::from_str::<CValue>(&text).unwrap(), z);
        assert_eq!(serde_json::to_string(&CValue::from(-3.0)).unwrap(), "-3.0");
        assert_eq!(serde_json::from_str::<CValue>("-3").unwrap(), CValue::from(-3.0));
        assert!(serde_json::from_str::<CValue>("\"x\"").is_err());
    }
}

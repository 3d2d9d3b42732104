use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

/// A metric outcome: either a finite number or an explicit "undefined" marker
/// with the reason it could not be evaluated. Never a silent NaN.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricValue {
    Defined(f64),
    Undefined(String),
}

impl MetricValue {
    pub fn undefined(reason: impl Into<String>) -> Self {
        MetricValue::Undefined(reason.into())
    }

    /// Wraps `v`, turning a non-finite number into `Undefined`.
    pub fn from_f64(v: f64, reason: &str) -> Self {
        if v.is_finite() {
            MetricValue::Defined(v)
        } else {
            MetricValue::Undefined(reason.to_string())
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            MetricValue::Defined(v) => Some(*v),
            MetricValue::Undefined(_) => None,
        }
    }

    pub fn is_defined(&self) -> bool {
        matches!(self, MetricValue::Defined(_))
    }

    pub fn reason(&self) -> Option<&str> {
        match self {
            MetricValue::Defined(_) => None,
            MetricValue::Undefined(r) => Some(r),
        }
    }
}

impl From<Option<f64>> for MetricValue {
    fn from(v: Option<f64>) -> Self {
        match v {
            Some(x) => MetricValue::from_f64(x, "non-finite value"),
            None => MetricValue::undefined("missing value"),
        }
    }
}

/// Serialized as `{"value": x}` or `{"value": null, "reason": "..."}`.
impl Serialize for MetricValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            MetricValue::Defined(v) => {
                let mut map = serializer.serialize_map(Some(1))?;
                map.serialize_entry("value", v)?;
                map.end()
            }
            MetricValue::Undefined(reason) => {
                let mut map = serializer.serialize_map(Some(2))?;
                map.serialize_entry("reason", reason)?;
                map.serialize_entry("value", &Option::<f64>::None)?;
                map.end()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undefined_serializes_as_null_with_reason() {
        let v = MetricValue::undefined("empty bucket");
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"{"reason":"empty bucket","value":null}"#);
        assert!(!s.contains("NaN"));
    }

    #[test]
    fn nan_becomes_undefined() {
        assert!(!MetricValue::from_f64(f64::NAN, "nan").is_defined());
        assert_eq!(MetricValue::from_f64(0.5, "nan").value(), Some(0.5));
    }
}

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{ptc, sbc, CodecError};
use crate::DEFAULT_SAMPLE_RATE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CodecFamily {
    Sbc,
    PtcMp3,
    PtcAac,
    PtcHeaac,
    External,
}

impl CodecFamily {
    pub const ALL: [CodecFamily; 5] = [
        CodecFamily::Sbc,
        CodecFamily::PtcMp3,
        CodecFamily::PtcAac,
        CodecFamily::PtcHeaac,
        CodecFamily::External,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CodecFamily::Sbc => "sbc",
            CodecFamily::PtcMp3 => "ptc-mp3",
            CodecFamily::PtcAac => "ptc-aac",
            CodecFamily::PtcHeaac => "ptc-heaac",
            CodecFamily::External => "external",
        }
    }

    pub fn is_ptc(self) -> bool {
        matches!(
            self,
            CodecFamily::PtcMp3 | CodecFamily::PtcAac | CodecFamily::PtcHeaac
        )
    }

    fn allowed_params(self) -> &'static [&'static str] {
        match self {
            CodecFamily::Sbc => &["allocation", "bitpool", "blocks", "subbands"],
            CodecFamily::PtcMp3 | CodecFamily::PtcAac | CodecFamily::PtcHeaac => {
                &["cutoff", "window"]
            }
            CodecFamily::External => &["cmd"],
        }
    }

    /// Inclusive kbps range accepted at parse time.
    fn bitrate_range(self) -> (f64, f64) {
        match self {
            CodecFamily::Sbc => (8.0, 1000.0),
            CodecFamily::PtcMp3 | CodecFamily::PtcAac => (8.0, 320.0),
            CodecFamily::PtcHeaac => (8.0, 64.0),
            CodecFamily::External => (1.0, 2000.0),
        }
    }
}

impl fmt::Display for CodecFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CodecFamily {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CodecFamily::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| CodecError::UnknownFamily(s.to_string()))
    }
}

/// A codec identity, bitrate and family-specific parameters.
///
/// The canonical text form is `family@kbps` followed by `;key=value` pairs in
/// key order, e.g. `sbc@64;allocation=snr`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecSpec {
    pub family: CodecFamily,
    pub bitrate_kbps: f64,
    pub params: BTreeMap<String, String>,
}

impl Eq for CodecSpec {}

impl CodecSpec {
    pub fn param(&self, key: &str) -> Option<&str> {
        self.params.get(key).map(String::as_str)
    }

    pub fn bitrate_bps(&self) -> u32 {
        (self.bitrate_kbps * 1000.0).round() as u32
    }
}

fn format_kbps(kbps: f64) -> String {
    if kbps.fract() == 0.0 {
        format!("{}", kbps as i64)
    } else {
        format!("{kbps}")
    }
}

impl fmt::Display for CodecSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.family, format_kbps(self.bitrate_kbps))?;
        for (k, v) in &self.params {
            write!(f, ";{k}={v}")?;
        }
        Ok(())
    }
}

impl FromStr for CodecSpec {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_codec_spec(s)
    }
}

impl Serialize for CodecSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for CodecSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_codec_spec(&text).map_err(serde::de::Error::custom)
    }
}

/// Parses `family@kbps[;key=value...]`.
///
/// The bitrate is checked before the family so that a non-positive rate is
/// reported as such even for an unknown family name.
pub fn parse_codec_spec(text: &str) -> Result<CodecSpec, CodecError> {
    let syntax = |reason: &str| CodecError::Syntax {
        text: text.to_string(),
        reason: reason.to_string(),
    };
    let mut parts = text.trim().split(';');
    let head = parts.next().unwrap_or_default();
    let (family_name, rate_text) = head
        .split_once('@')
        .ok_or_else(|| syntax("expected family@kbps"))?;
    let family_name = family_name.trim();
    let kbps: f64 = rate_text
        .trim()
        .parse()
        .map_err(|_| syntax("bitrate is not a number"))?;
    if !(kbps.is_finite() && kbps > 0.0) {
        return Err(CodecError::Bitrate {
            family: family_name.to_string(),
            kbps,
            reason: "bitrate must be positive".into(),
        });
    }
    let family: CodecFamily = family_name.parse()?;
    let (lo, hi) = family.bitrate_range();
    if kbps < lo || kbps > hi {
        return Err(CodecError::Bitrate {
            family: family.to_string(),
            kbps,
            reason: format!("supported range is {lo}..{hi} kbps"),
        });
    }

    let mut params = BTreeMap::new();
    for part in parts {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| syntax("parameters must be key=value"))?;
        let (k, v) = (k.trim(), v.trim());
        if !family.allowed_params().contains(&k) {
            return Err(CodecError::Param {
                family: family.to_string(),
                key: k.to_string(),
                reason: format!("expected one of {:?}", family.allowed_params()),
            });
        }
        if params.insert(k.to_string(), v.to_string()).is_some() {
            return Err(CodecError::Param {
                family: family.to_string(),
                key: k.to_string(),
                reason: "given twice".into(),
            });
        }
    }
    let spec = CodecSpec {
        family,
        bitrate_kbps: kbps,
        params,
    };
    match family {
        CodecFamily::Sbc => {
            sbc::SbcConfig::from_spec(&spec, DEFAULT_SAMPLE_RATE)?;
        }
        CodecFamily::PtcMp3 | CodecFamily::PtcAac | CodecFamily::PtcHeaac => {
            ptc::PtcConfig::from_spec(&spec, DEFAULT_SAMPLE_RATE)?;
        }
        CodecFamily::External => {}
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mp3_grid_entry() {
        let s = parse_codec_spec("ptc-mp3@32").unwrap();
        assert_eq!(s.family, CodecFamily::PtcMp3);
        assert_eq!(s.bitrate_kbps, 32.0);
        assert_eq!(s.to_string(), "ptc-mp3@32");
    }

    #[test]
    fn negative_rate_is_a_bitrate_error() {
        assert!(matches!(
            parse_codec_spec("opus@-5"),
            Err(CodecError::Bitrate { .. })
        ));
    }

    #[test]
    fn unknown_family_is_named() {
        let err = parse_codec_spec("foo@9").unwrap_err();
        assert!(matches!(&err, CodecError::UnknownFamily(f) if f == "foo"));
        assert!(err.to_string().contains("foo"));
    }

    #[test]
    fn params_are_canonicalised() {
        let s = parse_codec_spec(" sbc@64.0 ; subbands=8;allocation=snr ").unwrap();
        assert_eq!(s.to_string(), "sbc@64;allocation=snr;subbands=8");
        assert!(matches!(
            parse_codec_spec("sbc@64;window=1024"),
            Err(CodecError::Param { .. })
        ));
        assert!(matches!(
            parse_codec_spec("ptc-aac@48;cutoff=30000"),
            Err(CodecError::Param { .. })
        ));
        assert!(matches!(
            parse_codec_spec("ptc-heaac@96"),
            Err(CodecError::Bitrate { .. })
        ));
        assert!(matches!(
            parse_codec_spec("ptc-aac"),
            Err(CodecError::Syntax { .. })
        ));
    }

    #[test]
    fn serde_uses_the_canonical_string() {
        let s = parse_codec_spec("ptc-aac@32;window=512").unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, "\"ptc-aac@32;window=512\"");
        assert_eq!(serde_json::from_str::<CodecSpec>(&json).unwrap(), s);
    }

    proptest! {
        #[test]
        fn canonical_form_round_trips(
            family in prop::sample::select(vec!["ptc-mp3", "ptc-aac", "ptc-heaac", "sbc"]),
            kbps in 40u32..64,
            half in any::<bool>(),
        ) {
            // SBC bitpool steps are about 5.5 kbps apart, so low rates can sit >5% from any bitpool.
            let kbps = if family == "sbc" { kbps + 30 } else { kbps };
            let kbps = kbps as f64 + if half { 0.5 } else { 0.0 };
            let text = format!("{family}@{kbps}");
            let spec = parse_codec_spec(&text).unwrap();
            let canon = spec.to_string();
            prop_assert_eq!(parse_codec_spec(&canon).unwrap(), spec.clone());
            prop_assert_eq!(parse_codec_spec(&canon).unwrap().to_string(), canon);
        }
    }
}

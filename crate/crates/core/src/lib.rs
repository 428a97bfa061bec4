pub mod analysis;
pub mod binding;
pub mod config;
pub mod geometry;
pub mod keymat;
pub mod protocol;
pub mod simulator;
pub mod wire;

pub mod b64 {
    //! Unpadded base64url, the encoding for every binary field on the wire.
    use base64::engine::general_purpose::URL_SAFE_NO_PAD;
    use base64::Engine;

    pub fn encode(bytes: impl AsRef<[u8]>) -> String {
        URL_SAFE_NO_PAD.encode(bytes)
    }

    pub fn decode(text: &str) -> Result<Vec<u8>, base64::DecodeError> {
        URL_SAFE_NO_PAD.decode(text)
    }

    /// `#[serde(with = "b64::bytes")]` for byte vectors.
    pub mod bytes {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer, T: AsRef<[u8]>>(v: T, s: S) -> Result<S::Ok, S::Error> {
            s.serialize_str(&super::encode(v))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
            let text = <std::borrow::Cow<'de, str>>::deserialize(d)?;
            super::decode(&text).map_err(serde::de::Error::custom)
        }
    }

    /// `#[serde(with = "b64::bytes_list")]` for lists of byte vectors.
    pub mod bytes_list {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[Vec<u8>], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(v.iter().map(super::encode))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<u8>>, D::Error> {
            Vec::<String>::deserialize(d)?
                .iter()
                .map(|t| super::decode(t).map_err(serde::de::Error::custom))
                .collect()
        }
    }

    /// `#[serde(default, with = "b64::opt_bytes")]` for optional byte vectors.
    pub mod opt_bytes {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(bytes) => s.serialize_some(&super::encode(bytes)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
            Option::<String>::deserialize(d)?
                .map(|t| super::decode(&t).map_err(serde::de::Error::custom))
                .transpose()
        }
    }
}

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, Modality};

/// Feature names per modality, their grouping into named feature sets, and
/// the POS tagset used for language tokens.
///
/// Audio and vision features must be partitioned by feature sets. Language
/// features are embedding dimensions; language feature sets are optional
/// because language templates are keyed by token POS tags instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SchemaFile", try_from = "SchemaFile")]
pub struct FeatureSchema {
    modalities: BTreeMap<Modality, Vec<String>>,
    feature_sets: BTreeMap<Modality, BTreeMap<String, Vec<String>>>,
    pub pos_tagset: Vec<String>,
    set_of: HashMap<(Modality, String), String>,
    column_of: HashMap<(Modality, String), usize>,
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    modalities: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    feature_sets: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    #[serde(default)]
    pos_tagset: Vec<String>,
}

impl From<FeatureSchema> for SchemaFile {
    fn from(s: FeatureSchema) -> Self {
        SchemaFile {
            modalities: s
                .modalities
                .into_iter()
                .map(|(m, v)| (m.as_str().to_string(), v))
                .collect(),
            feature_sets: s
                .feature_sets
                .into_iter()
                .map(|(m, v)| (m.as_str().to_string(), v))
                .collect(),
            pos_tagset: s.pos_tagset,
        }
    }
}

impl TryFrom<SchemaFile> for FeatureSchema {
    type Error = DataError;

    fn try_from(file: SchemaFile) -> Result<Self, DataError> {
        let mut modalities = BTreeMap::new();
        for (key, features) in file.modalities {
            let m: Modality = key.parse()?;
            if features.is_empty() {
                return Err(DataError::Schema(format!("modality `{m}` has no features")));
            }
            let mut seen = HashSet::new();
            for f in &features {
                if !seen.insert(f.as_str()) {
                    return Err(DataError::Schema(format!(
                        "feature `{f}` listed twice in `{m}`"
                    )));
                }
            }
            modalities.insert(m, features);
        }
        for m in Modality::ALL {
            if !modalities.contains_key(&m) {
                return Err(DataError::Schema(format!("modality `{m}` missing")));
            }
        }

        let mut feature_sets = BTreeMap::new();
        let mut set_of = HashMap::new();
        for (key, sets) in file.feature_sets {
            let m: Modality = key.parse()?;
            let known: HashSet<&str> = modalities[&m].iter().map(String::as_str).collect();
            for (set_name, members) in &sets {
                if members.is_empty() {
                    return Err(DataError::Schema(format!(
                        "feature set `{set_name}` of `{m}` is empty"
                    )));
                }
                for f in members {
                    if !known.contains(f.as_str()) {
                        return Err(DataError::Schema(format!(
                            "feature set `{set_name}` names unknown {m} feature `{f}`"
                        )));
                    }
                    if let Some(prev) = set_of.insert((m, f.clone()), set_name.clone()) {
                        return Err(DataError::Schema(format!(
                            "{m} feature `{f}` appears in both `{prev}` and `{set_name}`"
                        )));
                    }
                }
            }
            feature_sets.insert(m, sets);
        }
        for m in [Modality::Audio, Modality::Vision] {
            if let Some(missing) = modalities[&m]
                .iter()
                .find(|f| !set_of.contains_key(&(m, (*f).clone())))
            {
                return Err(DataError::Schema(format!(
                    "{m} feature `{missing}` belongs to no feature set"
                )));
            }
        }
        if let Some(sets) = feature_sets.get(&Modality::Language) {
            if !sets.is_empty() {
                if let Some(missing) = modalities[&Modality::Language]
                    .iter()
                    .find(|f| !set_of.contains_key(&(Modality::Language, (*f).clone())))
                {
                    return Err(DataError::Schema(format!(
                        "language feature `{missing}` belongs to no feature set"
                    )));
                }
            }
        }

        let mut pos_tagset = Vec::new();
        for tag in file.pos_tagset {
            if !pos_tagset.contains(&tag) {
                pos_tagset.push(tag);
            }
        }

        let column_of = modalities
            .iter()
            .flat_map(|(m, fs)| {
                fs.iter()
                    .enumerate()
                    .map(move |(i, f)| ((*m, f.clone()), i))
            })
            .collect();

        Ok(FeatureSchema {
            modalities,
            feature_sets,
            pos_tagset,
            set_of,
            column_of,
        })
    }
}

impl FeatureSchema {
    pub fn from_json_str(s: &str) -> Result<Self, DataError> {
        let file: SchemaFile =
            serde_json::from_str(s).map_err(|e| DataError::Parse(e.to_string()))?;
        FeatureSchema::try_from(file)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn dims(&self, m: Modality) -> usize {
        self.modalities[&m].len()
    }

    pub fn feature_names(&self, m: Modality) -> &[String] {
        &self.modalities[&m]
    }

    pub fn feature_name(&self, m: Modality, column: usize) -> &str {
        &self.modalities[&m][column]
    }

    pub fn column(&self, m: Modality, feature: &str) -> Option<usize> {
        self.column_of.get(&(m, feature.to_string())).copied()
    }

    /// Name of the feature set holding `feature`, if any.
    pub fn set_of(&self, m: Modality, feature: &str) -> Option<&str> {
        self.set_of
            .get(&(m, feature.to_string()))
            .map(String::as_str)
    }

    pub fn feature_sets(&self, m: Modality) -> impl Iterator<Item = (&str, &[String])> {
        self.feature_sets
            .get(&m)
            .into_iter()
            .flat_map(|sets| sets.iter().map(|(k, v)| (k.as_str(), v.as_slice())))
    }

    pub fn set_members(&self, m: Modality, set_name: &str) -> Option<&[String]> {
        self.feature_sets.get(&m)?.get(set_name).map(Vec::as_slice)
    }

    /// Column indices of a feature set's members, in schema order.
    pub fn set_columns(&self, m: Modality, set_name: &str) -> Option<Vec<usize>> {
        let members = self.set_members(m, set_name)?;
        let mut cols: Vec<usize> = members.iter().filter_map(|f| self.column(m, f)).collect();
        cols.sort_unstable();
        Some(cols)
    }
}

pub fn load_schema(path: &Path) -> Result<FeatureSchema, DataError> {
    let text = std::fs::read_to_string(path)?;
    FeatureSchema::from_json_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema_with_audio_sets(sets: &str) -> Result<FeatureSchema, DataError> {
        FeatureSchema::from_json_str(&format!(
            r#"{{
              "modalities": {{"language": ["e0"], "audio": ["F0", "NAQ"], "vision": ["AU1", "AU2", "AU4"]}},
              "feature_sets": {{"audio": {sets}, "vision": {{"Brow": ["AU1", "AU2", "AU4"]}}}},
              "pos_tagset": ["ADJ", "DET", "INTJ", "DET", "INTJ"]
            }}"#
        ))
    }

    #[test]
    fn brow_and_pitch_sets_accepted() {
        let s = schema_with_audio_sets(r#"{"Pitch": ["F0"], "Glottal": ["NAQ"]}"#).unwrap();
        assert_eq!(
            s.set_members(Modality::Vision, "Brow").unwrap(),
            ["AU1", "AU2", "AU4"]
        );
        assert_eq!(s.set_of(Modality::Audio, "F0"), Some("Pitch"));
        assert_eq!(
            s.set_columns(Modality::Vision, "Brow").unwrap(),
            vec![0, 1, 2]
        );
        assert_eq!(s.pos_tagset, ["ADJ", "DET", "INTJ"]);
    }

    #[test]
    fn feature_in_two_sets_rejected() {
        let err =
            schema_with_audio_sets(r#"{"Pitch": ["F0"], "Glottal": ["NAQ", "F0"]}"#).unwrap_err();
        assert!(
            matches!(err, DataError::Schema(ref m) if m.contains("F0")),
            "{err}"
        );
    }

    #[test]
    fn uncovered_feature_rejected() {
        assert!(matches!(
            schema_with_audio_sets(r#"{"Pitch": ["F0"]}"#),
            Err(DataError::Schema(_))
        ));
    }

    #[test]
    fn unknown_modality_and_empty_modality_rejected() {
        let unknown = FeatureSchema::from_json_str(
            r#"{"modalities": {"language": ["a"], "audio": ["b"], "vision": ["c"], "smell": ["d"]}}"#,
        );
        assert!(matches!(unknown, Err(DataError::Schema(_))));
        let empty = FeatureSchema::from_json_str(
            r#"{"modalities": {"language": [], "audio": ["b"], "vision": ["c"]}}"#,
        );
        assert!(matches!(empty, Err(DataError::Schema(_))));
    }

    #[test]
    fn malformed_is_parse_error() {
        assert!(matches!(
            FeatureSchema::from_json_str("{not json"),
            Err(DataError::Parse(_))
        ));
    }

    #[test]
    fn serialization_round_trip() {
        let s = schema_with_audio_sets(r#"{"Pitch": ["F0"], "Glottal": ["NAQ"]}"#).unwrap();
        assert_eq!(
            FeatureSchema::from_json_str(&s.to_json_string()).unwrap(),
            s
        );
    }
}

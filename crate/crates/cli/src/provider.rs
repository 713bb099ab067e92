//! Provider specs given to `attribute --provider`.

use std::path::Path;

use modallens::attribution::{
    HttpCallbackProvider, LinearProvider, MlpToyProvider, PredictionProvider, SubprocessProvider,
};
use modallens::fingerprint;
use modallens::FeatureSchema;

use crate::CliError;

/// Largest batch sent per HTTP callback.
pub const HTTP_MAX_BATCH: usize = 256;

pub const SPEC_HELP: &str =
    "linear:<weights.json> | mlp-toy:<seed> | subprocess:<command> | http:<url>";

/// A constructed provider and the description recorded in the attribution
/// config. The description covers what determines the provider's outputs:
/// a linear model's weights, not its path.
pub struct ResolvedProvider {
    pub provider: Box<dyn PredictionProvider>,
    pub description: String,
}

pub fn load_linear(path: &Path) -> Result<LinearProvider, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Validation(format!("reading {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Validation(format!("{}: not a linear model: {e}", path.display())))
}

pub fn resolve(
    spec: &str,
    schema: &FeatureSchema,
    schema_fingerprint: &str,
) -> Result<ResolvedProvider, CliError> {
    if spec.starts_with("http://") || spec.starts_with("https://") {
        return resolve(&format!("http:{spec}"), schema, schema_fingerprint);
    }
    let (kind, arg) = spec
        .split_once(':')
        .filter(|(_, a)| !a.is_empty())
        .ok_or_else(|| CliError::Usage(format!("provider `{spec}` is not one of {SPEC_HELP}")))?;
    match kind {
        "linear" => {
            let model = load_linear(Path::new(arg))?;
            for m in modallens::Modality::ALL {
                if model.weights(m).len() != schema.dims(m) {
                    return Err(CliError::Validation(format!(
                        "{arg}: {} weights for {} {} features",
                        model.weights(m).len(),
                        schema.dims(m),
                        m.as_str()
                    )));
                }
            }
            let description = format!("linear:{}", fingerprint::of(&model));
            Ok(ResolvedProvider {
                provider: Box::new(model),
                description,
            })
        }
        "mlp-toy" => {
            let seed: u64 = arg
                .parse()
                .map_err(|_| CliError::Usage(format!("mlp-toy seed `{arg}` is not an integer")))?;
            Ok(ResolvedProvider {
                provider: Box::new(MlpToyProvider::for_schema(schema, seed)),
                description: format!("mlp-toy:{seed}"),
            })
        }
        "subprocess" => {
            let p = SubprocessProvider::spawn(arg, Some(schema_fingerprint))
                .map_err(|e| CliError::Provider(e.to_string()))?;
            Ok(ResolvedProvider {
                provider: Box::new(p),
                description: format!("subprocess:{arg}"),
            })
        }
        "http" => {
            let p = HttpCallbackProvider::new(arg, HTTP_MAX_BATCH)
                .map_err(|e| CliError::Provider(e.to_string()))?;
            Ok(ResolvedProvider {
                provider: Box::new(p),
                description: format!("http:{arg}"),
            })
        }
        other => Err(CliError::Usage(format!(
            "unknown provider kind `{other}`; expected {SPEC_HELP}"
        ))),
    }
}

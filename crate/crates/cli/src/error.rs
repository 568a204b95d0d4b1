//! Machine-readable error reporting: every validation failure prints one
//! JSON object on stdout and exits with code 2.

use serde::Serialize;

use demethod::verifier::VerifyError;

#[derive(Debug, Serialize)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minimal_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub admissible_sigma: Option<f64>,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl ToString) -> Self {
        Self {
            kind,
            message: message.to_string(),
            minimal_lambda: None,
            admissible_sigma: None,
        }
    }

    pub fn config(message: impl ToString) -> Self {
        Self::new("config", message)
    }

    pub fn io(message: impl ToString) -> Self {
        Self::new("io", message)
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        let message = e.to_string();
        match e {
            VerifyError::InvalidParams(v) => Self {
                kind: "invalid-params",
                message,
                minimal_lambda: v.minimal_lambda(),
                admissible_sigma: None,
            },
            VerifyError::NotCooperative { .. } => Self::new("not-cooperative", message),
            VerifyError::DomainExit { admissible } => Self {
                kind: "domain-exit",
                message,
                minimal_lambda: None,
                admissible_sigma: Some(admissible),
            },
            VerifyError::SigmaInadmissible { admissible, .. } => Self {
                kind: "sigma-inadmissible",
                message,
                minimal_lambda: None,
                admissible_sigma: Some(admissible),
            },
            VerifyError::ShapeMismatch(_) => Self::new("shape-mismatch", message),
            VerifyError::InitialGap { .. } | VerifyError::PerturbationTooLarge { .. } => {
                Self::new("invalid-comparison", message)
            }
            VerifyError::Ode(_) => Self::new("integration-error", message),
            VerifyError::Envelope(_) => Self::new("envelope-error", message),
        }
    }
}

impl From<demethod::ode::OdeError> for CliError {
    fn from(e: demethod::ode::OdeError) -> Self {
        match e {
            demethod::ode::OdeError::LeftDomain { ref partial, .. } => {
                let admissible = partial.end();
                Self {
                    kind: "domain-exit",
                    message: e.to_string(),
                    minimal_lambda: None,
                    admissible_sigma: Some(admissible),
                }
            }
            other => Self::new("integration-error", other.to_string()),
        }
    }
}

impl From<demethod::envelope::EnvelopeError> for CliError {
    fn from(e: demethod::envelope::EnvelopeError) -> Self {
        match e {
            demethod::envelope::EnvelopeError::InvalidParams(ref v) => Self {
                kind: "invalid-params",
                message: e.to_string(),
                minimal_lambda: v.minimal_lambda(),
                admissible_sigma: None,
            },
            other => Self::new("envelope-error", other.to_string()),
        }
    }
}

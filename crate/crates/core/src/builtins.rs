//! Named example specifications shared by the CLI, tests and benches.

use std::sync::Arc;

use crate::model::{
    AnySpec, CTSystemSpec, ChannelParam, DeBruijnSpec, InputMap, LinearFeedbackSpec, MessagePrior,
    Prior, ScalarChannelSpec,
};
use crate::registry::{CtConstantMessage, CtLinearFeedback};

pub const NAMES: &[(&str, &str)] = &[
    (
        "scalar_gaussian",
        "Y = sqrt(snr) X + Z, X ~ N(0,1), snr = 1",
    ),
    (
        "binary_input",
        "Y = sqrt(snr) X + Z, X uniform on {-1, +1}, snr = 1",
    ),
    (
        "linear_feedback_n2",
        "n = 2, X1 = M, X2 = M + 0.5 Y1, M ~ N(0,1), rho = 1",
    ),
    ("debruijn_gaussian", "Y = X + sqrt(t) Z, X ~ N(0,1), t = 1"),
    (
        "ct_constant_message",
        "dY = rho W dt + dB, W ~ N(0,1), rho = 1, T = 1, step 1e-3",
    ),
    (
        "ct_linear_feedback",
        "dY = rho (W - Y) dt + dB, W ~ N(0,1), rho = 1, T = 1, step 1e-3",
    ),
];

pub fn scalar_gaussian() -> ScalarChannelSpec {
    ScalarChannelSpec::new(Prior::standard_gaussian(), ChannelParam::Snr(1.0))
}

pub fn binary_input() -> ScalarChannelSpec {
    ScalarChannelSpec::new(Prior::binary(), ChannelParam::Snr(1.0))
}

/// Two uses of a Gaussian channel, the second input refined by feedback.
pub fn linear_feedback(alpha: f64, rho: f64) -> LinearFeedbackSpec {
    LinearFeedbackSpec {
        n: 2,
        message_dim: 1,
        message_cov: vec![vec![1.0]],
        input_map: InputMap {
            a: vec![vec![1.0], vec![1.0]],
            b: vec![vec![0.0, 0.0], vec![alpha, 0.0]],
        },
        rho,
    }
}

pub fn linear_feedback_n2() -> LinearFeedbackSpec {
    linear_feedback(0.5, 1.0)
}

pub fn debruijn_gaussian() -> DeBruijnSpec {
    DeBruijnSpec {
        prior: Prior::standard_gaussian(),
        t: 1.0,
    }
}

pub fn ct_constant_message() -> CTSystemSpec {
    CTSystemSpec::new(
        1.0,
        Arc::new(CtConstantMessage),
        MessagePrior::scalar_gaussian(0.0, 1.0),
        1.0,
    )
}

pub fn ct_linear_feedback() -> CTSystemSpec {
    CTSystemSpec::new(
        1.0,
        Arc::new(CtLinearFeedback { gain: 1.0 }),
        MessagePrior::scalar_gaussian(0.0, 1.0),
        1.0,
    )
}

pub fn by_name(name: &str) -> Option<AnySpec> {
    Some(match name {
        "scalar_gaussian" => AnySpec::Scalar(scalar_gaussian()),
        "binary_input" => AnySpec::Scalar(binary_input()),
        "linear_feedback_n2" => AnySpec::Linear(linear_feedback_n2()),
        "debruijn_gaussian" => AnySpec::DeBruijn(debruijn_gaussian()),
        "ct_constant_message" => AnySpec::Ct(ct_constant_message()),
        "ct_linear_feedback" => AnySpec::Ct(ct_linear_feedback()),
        _ => return None,
    })
}

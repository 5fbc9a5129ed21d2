use super::model::QuantModel;
use super::step::{engine_reset, engine_step, DeltaStateFx};
use crate::control::{ControlInput, ControlOutput, Controller};
use crate::Result;

/// The fixed-point network driving the joints in place of the PD law.
#[derive(Debug, Clone)]
pub struct RnnController {
    pub model: QuantModel,
    pub state: DeltaStateFx,
    out: [f64; 2],
}

impl RnnController {
    pub fn new(model: QuantModel) -> Result<Self> {
        model.validate()?;
        if model.arch.input_dim != ControlInput::DIM || model.arch.output_dim != 2 {
            return Err(crate::Error::Shape(format!(
                "controller needs {} inputs and 2 outputs, model has {} and {}",
                ControlInput::DIM,
                model.arch.input_dim,
                model.arch.output_dim
            )));
        }
        let state = engine_reset(&model);
        Ok(Self {
            model,
            state,
            out: [0.0; 2],
        })
    }
}

impl Controller for RnnController {
    fn id(&self) -> String {
        "rnn".to_string()
    }

    fn reset(&mut self) {
        self.state = engine_reset(&self.model);
    }

    fn control(&mut self, input: &ControlInput) -> Result<ControlOutput> {
        engine_step(&self.model, &mut self.state, &input.to_array(), &mut self.out)?;
        Ok(ControlOutput {
            tau_pk: self.out[0],
            tau_pa: self.out[1],
        })
    }
}

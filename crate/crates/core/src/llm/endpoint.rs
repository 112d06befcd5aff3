use super::client::{Completion, CompletionRequest, LlmClient, LlmError};
use super::ledger::{record_call, CallMeta, Purpose, TokenLedger};
use super::tokenizer::Tokenizer;

/// A client bound to a model and a tokenizer. Every completed call is recorded.
#[derive(Clone, Copy)]
pub struct LlmEndpoint<'a> {
    pub client: &'a dyn LlmClient,
    pub model: &'a str,
    pub max_tokens: u32,
    pub tokenizer: &'a dyn Tokenizer,
}

impl LlmEndpoint<'_> {
    pub fn call(
        &self,
        ledger: &mut TokenLedger,
        mention_key: &str,
        purpose: Purpose,
        attempt: u32,
        prompt: &str,
    ) -> Result<Completion, LlmError> {
        let request = CompletionRequest::new(self.model, prompt, self.max_tokens);
        let completion = self.client.complete(&request)?;
        record_call(
            ledger,
            CallMeta {
                mention_key,
                purpose,
                model: self.model,
                attempt,
            },
            prompt,
            &completion,
            self.tokenizer,
        );
        Ok(completion)
    }
}

#![no_main]

use libfuzzer_sys::fuzz_target;
use pinlab::environment::Environment;

fuzz_target!(|data: &[u8]| {
    if let Ok(env) = Environment::from_bytes(data) {
        let bytes = env.to_bytes();
        assert_eq!(Environment::from_bytes(&bytes).as_ref(), Ok(&env));
        assert_eq!(Environment::from_text(&env.to_text()).as_ref(), Ok(&env));
    }
});

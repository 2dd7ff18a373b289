#![no_main]

use libfuzzer_sys::fuzz_target;
use pinlab::environment::Environment;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(env) = Environment::from_text(text) {
        assert_eq!(Environment::from_text(&env.to_text()).as_ref(), Ok(&env));
        assert_eq!(Environment::from_bytes(&env.to_bytes()).as_ref(), Ok(&env));
    }
});

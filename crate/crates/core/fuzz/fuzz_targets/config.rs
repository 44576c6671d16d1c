#![no_main]
use bdaepi::config::ConfigFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ConfigFile::parse(text) {
        let _ = cfg.run_config();
        let _ = cfg.sim_setup();
    }
});

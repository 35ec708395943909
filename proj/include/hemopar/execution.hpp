#pragma once

namespace hemopar {

// Selects the serial reference loop or the OpenMP kernel. Both paths must
// produce bit-identical results; tests compare them directly.
enum class Execution { serial, parallel };

// Upper bound on OpenMP threads; 0 restores the runtime default.
void set_thread_count(int threads);
int thread_count();

}  // namespace hemopar

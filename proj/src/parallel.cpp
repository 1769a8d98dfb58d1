// Copyright 2026 The MHE-SDC Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include "mhe/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

namespace mhe {

namespace {

int& thread_setting() {
  static int threads = [] {
    const char* env = std::getenv("MHE_THREADS");
    int n = 0;
    if (env != nullptr) {
      try {
        n = std::stoi(env);
      } catch (...) {
        n = 0;
      }
    }
    return n > 0 ? n : omp_get_max_threads();
  }();
  return threads;
}

}  // namespace

int kernel_threads() { return thread_setting(); }

void set_kernel_threads(int threads) {
  thread_setting() = threads > 0 ? threads : omp_get_max_threads();
}

}  // namespace mhe

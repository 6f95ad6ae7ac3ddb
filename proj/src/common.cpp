#include "holofocus/common.hpp"

#include <openssl/evp.h>

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <fstream>
#include <mutex>
#include <thread>
#include <vector>

namespace holo {

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Box-Muller on two uniforms; u clamped away from 0 so log() is finite.
    double u = uniform();
    if (u < 1e-300) u = 1e-300;
    double v = uniform();
    double r = std::sqrt(-2.0 * std::log(u));
    double theta = 2.0 * 3.14159265358979323846 * v;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    static const char* hexd = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hexd[digest[i] >> 4]);
        out.push_back(hexd[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_file_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file for hashing: " + path);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        std::streamsize got = in.gcount();
        if (got > 0) EVP_DigestUpdate(ctx, buf, static_cast<size_t>(got));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hexd = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hexd[digest[i] >> 4]);
        out.push_back(hexd[digest[i] & 0xf]);
    }
    return out;
}

std::uint64_t seed_stream(std::uint64_t base, std::string_view label, std::uint64_t a,
                          std::uint64_t b) {
    std::string key;
    key.reserve(label.size() + 3 * 21);
    key.append(label);
    key.push_back(':');
    key.append(std::to_string(base));
    key.push_back(':');
    key.append(std::to_string(a));
    key.push_back(':');
    key.append(std::to_string(b));
    std::string hex = sha256_hex(key);
    // First 16 hex chars as a little-endian u64.
    std::uint64_t out = 0;
    for (int i = 0; i < 16; ++i) {
        char c = hex[static_cast<size_t>(i)];
        std::uint64_t nib = c <= '9' ? static_cast<std::uint64_t>(c - '0')
                                     : static_cast<std::uint64_t>(c - 'a' + 10);
        out |= nib << (4 * i);
    }
    return out;
}

namespace {

thread_local bool in_parallel_region = false;

class WorkerPool {
public:
    static WorkerPool& instance() {
        static WorkerPool pool;
        return pool;
    }

    void resize(int n) {
        if (n < 1) n = 1;
        std::lock_guard<std::mutex> outer(run_mutex_);
        stop_workers();
        target_ = n;
        start_workers();
    }

    int size() {
        std::lock_guard<std::mutex> outer(run_mutex_);
        return target_;
    }

    void run(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& chunk) {
        if (n <= 0) return;
        if (in_parallel_region) { // nested call: run inline on this thread
            chunk(0, n);
            return;
        }
        std::lock_guard<std::mutex> outer(run_mutex_);
        int nthreads = target_;
        if (nthreads <= 1 || n == 1) {
            in_parallel_region = true;
            try {
                chunk(0, n);
            } catch (...) {
                in_parallel_region = false;
                throw;
            }
            in_parallel_region = false;
            return;
        }
        std::int64_t per = (n + nthreads - 1) / nthreads;
        {
            std::lock_guard<std::mutex> lk(mutex_);
            chunk_ = &chunk;
            total_ = n;
            chunk_size_ = per;
            pending_ = 0;
            for (std::int64_t b = 0; b < n; b += per) ++pending_;
            next_ = 0;
            error_ = nullptr;
            ++generation_;
        }
        cv_.notify_all();
        std::unique_lock<std::mutex> lk(mutex_);
        while (next_ < total_) {
            std::int64_t begin = next_;
            std::int64_t end = std::min<std::int64_t>(begin + chunk_size_, total_);
            next_ = end;
            lk.unlock();
            std::exception_ptr eptr;
            in_parallel_region = true;
            try {
                chunk(begin, end);
            } catch (...) {
                eptr = std::current_exception();
            }
            in_parallel_region = false;
            lk.lock();
            if (eptr && !error_) error_ = eptr;
            if (--pending_ == 0) done_cv_.notify_all();
        }
        done_cv_.wait(lk, [&] { return pending_ == 0; });
        chunk_ = nullptr;
        if (error_) {
            std::exception_ptr e = error_;
            error_ = nullptr;
            lk.unlock();
            std::rethrow_exception(e);
        }
    }

private:
    WorkerPool() : target_(1) {}
    ~WorkerPool() { stop_workers(); }

    void start_workers() {
        stopping_ = false;
        for (int i = 1; i < target_; ++i) {
            workers_.emplace_back([this] { worker_loop(); });
        }
    }

    void stop_workers() {
        {
            std::lock_guard<std::mutex> lk(mutex_);
            stopping_ = true;
            ++generation_;
        }
        cv_.notify_all();
        for (auto& w : workers_) w.join();
        workers_.clear();
    }

    void worker_loop() {
        in_parallel_region = true;
        std::uint64_t seen = 0;
        while (true) {
            std::unique_lock<std::mutex> lk(mutex_);
            cv_.wait(lk, [&] { return stopping_ || generation_ != seen; });
            if (stopping_) return;
            seen = generation_;
            while (chunk_ && next_ < total_) {
                std::int64_t begin = next_;
                std::int64_t end = std::min<std::int64_t>(begin + chunk_size_, total_);
                next_ = end;
                const auto* fn = chunk_;
                lk.unlock();
                std::exception_ptr eptr;
                try {
                    (*fn)(begin, end);
                } catch (...) {
                    eptr = std::current_exception();
                }
                lk.lock();
                if (eptr && !error_) error_ = eptr;
                if (--pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    std::mutex run_mutex_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    std::vector<std::thread> workers_;
    const std::function<void(std::int64_t, std::int64_t)>* chunk_ = nullptr;
    std::int64_t total_ = 0;
    std::int64_t chunk_size_ = 0;
    std::int64_t next_ = 0;
    std::exception_ptr error_ = nullptr;
    int pending_ = 0;
    std::uint64_t generation_ = 0;
    bool stopping_ = false;
    int target_ = 1;
};

} // namespace

void set_thread_count(int n) { WorkerPool::instance().resize(n); }

int thread_count() { return WorkerPool::instance().size(); }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& chunk) {
    WorkerPool::instance().run(n, chunk);
}

} // namespace holo

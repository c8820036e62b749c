#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace akn {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename U>
void put(std::ostream& os, U v)
{
    os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U get(std::istream& is)
{
    U v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(U)))
        throw IoError("unexpected end of file");
    return v;
}

inline void expect_magic(std::istream& is, const char (&magic)[5])
{
    char buf[4];
    if (!is.read(buf, 4) || std::memcmp(buf, magic, 4) != 0)
        throw IoError(std::string("bad magic, expected ") + magic);
}

} // namespace io
} // namespace akn

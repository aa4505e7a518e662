#pragma once

#include <cctype>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>

namespace obsopt {

/// Tiny arithmetic expressions over the spatial variables x, y:
/// +, -, *, /, unary minus, parentheses, numeric literals, and the calls
/// sin, cos, exp, min, max.
class Expression {
public:
    static Expression parse(const std::string& text) {
        Parser p{text, 0};
        Node n = p.parse_sum();
        p.skip_ws();
        if (p.pos != text.size())
            throw std::invalid_argument("expression: trailing input at '" +
                                        text.substr(p.pos) + "'");
        Expression e;
        e.eval_ = std::move(n);
        e.text_ = text;
        return e;
    }

    double operator()(double x, double y) const { return eval_(x, y); }
    const std::string& text() const { return text_; }

private:
    using Node = std::function<double(double, double)>;

    struct Parser {
        const std::string& s;
        std::size_t pos;

        void skip_ws() {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        }
        bool eat(char c) {
            skip_ws();
            if (pos < s.size() && s[pos] == c) { ++pos; return true; }
            return false;
        }
        void expect(char c) {
            if (!eat(c))
                throw std::invalid_argument(std::string("expression: expected '") + c + "'");
        }

        Node parse_sum() {
            Node lhs = parse_product();
            for (;;) {
                if (eat('+')) {
                    Node rhs = parse_product();
                    lhs = [l = std::move(lhs), r = std::move(rhs)](double x, double y) {
                        return l(x, y) + r(x, y);
                    };
                } else if (eat('-')) {
                    Node rhs = parse_product();
                    lhs = [l = std::move(lhs), r = std::move(rhs)](double x, double y) {
                        return l(x, y) - r(x, y);
                    };
                } else {
                    return lhs;
                }
            }
        }

        Node parse_product() {
            Node lhs = parse_unary();
            for (;;) {
                if (eat('*')) {
                    Node rhs = parse_unary();
                    lhs = [l = std::move(lhs), r = std::move(rhs)](double x, double y) {
                        return l(x, y) * r(x, y);
                    };
                } else if (eat('/')) {
                    Node rhs = parse_unary();
                    lhs = [l = std::move(lhs), r = std::move(rhs)](double x, double y) {
                        return l(x, y) / r(x, y);
                    };
                } else {
                    return lhs;
                }
            }
        }

        Node parse_unary() {
            if (eat('-')) {
                Node inner = parse_unary();
                return [f = std::move(inner)](double x, double y) { return -f(x, y); };
            }
            return parse_atom();
        }

        Node parse_atom() {
            skip_ws();
            if (pos >= s.size())
                throw std::invalid_argument("expression: unexpected end of input");
            const char c = s[pos];
            if (c == '(') {
                ++pos;
                Node inner = parse_sum();
                expect(')');
                return inner;
            }
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                std::size_t consumed = 0;
                const double v = std::stod(s.substr(pos), &consumed);
                pos += consumed;
                return [v](double, double) { return v; };
            }
            if (std::isalpha(static_cast<unsigned char>(c))) {
                std::size_t end = pos;
                while (end < s.size() &&
                       std::isalpha(static_cast<unsigned char>(s[end]))) ++end;
                const std::string name = s.substr(pos, end - pos);
                pos = end;
                if (name == "x") return [](double x, double) { return x; };
                if (name == "y") return [](double, double y) { return y; };
                if (name == "pi") return [](double, double) { return M_PI; };
                if (name == "sin" || name == "cos" || name == "exp") {
                    expect('(');
                    Node arg = parse_sum();
                    expect(')');
                    if (name == "sin")
                        return [f = std::move(arg)](double x, double y) {
                            return std::sin(f(x, y));
                        };
                    if (name == "cos")
                        return [f = std::move(arg)](double x, double y) {
                            return std::cos(f(x, y));
                        };
                    return [f = std::move(arg)](double x, double y) {
                        return std::exp(f(x, y));
                    };
                }
                if (name == "min" || name == "max") {
                    expect('(');
                    Node a = parse_sum();
                    expect(',');
                    Node b = parse_sum();
                    expect(')');
                    if (name == "min")
                        return [fa = std::move(a), fb = std::move(b)](double x, double y) {
                            return std::min(fa(x, y), fb(x, y));
                        };
                    return [fa = std::move(a), fb = std::move(b)](double x, double y) {
                        return std::max(fa(x, y), fb(x, y));
                    };
                }
                throw std::invalid_argument("expression: unknown identifier '" + name + "'");
            }
            throw std::invalid_argument(std::string("expression: unexpected character '") +
                                        c + "'");
        }
    };

    Node eval_;
    std::string text_;
};

} // namespace obsopt

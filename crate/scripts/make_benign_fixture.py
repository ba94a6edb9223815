#!/usr/bin/env python3
"""Regenerates crates/core/data/benign.txt: form-field values in the style of
an e-commerce request log (user names, addresses, searches, comments)."""
import random
import sys

FIRST = ["maria", "jose", "antonio", "carmen", "juan", "ana", "luis", "laura",
         "pedro", "lucia", "john", "emma", "oliver", "sophia", "liam", "mia",
         "noah", "ava", "pablo", "elena", "javier", "marta", "diego", "sara"]
LAST = ["garcia", "fernandez", "lopez", "martinez", "sanchez", "perez", "gomez",
        "smith", "johnson", "brown", "taylor", "wilson", "ruiz", "diaz", "moreno",
        "munoz", "alonso", "navarro", "torres", "dominguez"]
STREETS = ["Calle Mayor", "Avenida de America", "Calle Alcala", "Gran Via",
           "Paseo del Prado", "Calle Serrano", "Main Street", "Oak Avenue",
           "Elm Road", "Calle Toledo", "Plaza Espana", "Rambla Catalunya"]
CITIES = ["Madrid", "Barcelona", "Valencia", "Sevilla", "Bilbao", "Zaragoza",
          "Malaga", "Granada", "Salamanca", "Leeds", "Bristol", "Lisbon"]
PRODUCTS = ["vino tinto rioja", "queso manchego", "jamon iberico", "aceite de oliva",
            "running shoes", "wireless headphones", "coffee beans", "green tea",
            "leather wallet", "yoga mat", "phone case", "usb cable", "desk lamp",
            "water bottle", "backpack", "sunglasses", "wool scarf", "chess set"]
ADJ = ["red", "blue", "black", "large", "small", "organic", "cheap", "new",
       "vintage", "premium", "mini", "classic"]
BUTTONS = ["Entrar", "Comprar", "Vaciar carrito", "Add to cart", "Checkout",
           "Login", "Registrarse", "Buscar", "Continue", "Submit", "Pagar"]
COMMENTS = [
    "great product fast delivery", "arrived on time thanks",
    "the box was damaged but the item is fine", "please call before delivery",
    "leave the parcel with the neighbour", "gift wrap please",
    "muy buen producto", "entrega rapida", "todo correcto gracias",
    "size runs a bit small", "would buy again", "colour as described",
    "second order this month", "happy birthday mum", "ring the bell twice",
    "no contact delivery", "excelente calidad", "the lid does not close well",
    "need an invoice for my company", "deliver after 6pm",
]
DOMAINS = ["gmail.com", "hotmail.com", "yahoo.es", "example.org", "correo.es"]


def token(rng, n):
    alphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
    return "".join(rng.choice(alphabet) for _ in range(n))


def value(rng):
    kind = rng.randrange(16)
    f, l = rng.choice(FIRST), rng.choice(LAST)
    if kind == 0:
        return f"{f}{rng.randrange(1, 999)}"
    if kind == 1:
        return f"{f}.{l}@{rng.choice(DOMAINS)}"
    if kind == 2:
        return f"{f.capitalize()} {l.capitalize()}"
    if kind == 3:
        return f"{rng.choice(STREETS)} {rng.randrange(1, 200)}"
    if kind == 4:
        return f"{rng.choice(CITIES)}"
    if kind == 5:
        return f"{rng.randrange(10000, 52999):05d}"
    if kind == 6:
        return f"{rng.choice(ADJ)} {rng.choice(PRODUCTS)}"
    if kind == 7:
        return f"{rng.randrange(1, 20)}"
    if kind == 8:
        return f"{rng.randrange(1, 300)}.{rng.randrange(0, 100):02d}"
    if kind == 9:
        return f"20{rng.randrange(18, 25)}-{rng.randrange(1, 13):02d}-{rng.randrange(1, 29):02d}"
    if kind == 10:
        return " ".join(f"{rng.randrange(0, 10000):04d}" for _ in range(4))
    if kind == 11:
        return token(rng, rng.randrange(8, 17))
    if kind == 12:
        return rng.choice(BUTTONS)
    if kind == 13:
        return rng.choice(COMMENTS)
    if kind == 14:
        return f"+34 {rng.randrange(600, 700)} {rng.randrange(100, 1000)} {rng.randrange(100, 1000)}"
    return f"{rng.choice(PRODUCTS)} x{rng.randrange(1, 6)}"


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
    rng = random.Random(2010)
    for _ in range(n):
        print(value(rng))


if __name__ == "__main__":
    main()

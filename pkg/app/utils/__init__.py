# логирование и разбор рациональных чисел

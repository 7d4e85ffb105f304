from setuptools import setup, find_packages

# Load the spheremimo version info.
#
# Note that we cannot simply import the module, since dependencies listed
# in setup() will very likely not be installed yet when setup.py run.
#
# See:
#   https://packaging.python.org/guides/single-sourcing-package-version


_version = {}
with open('spheremimo/_version.py') as fp:
    exec(fp.read(), _version)


with open("README.md", "r") as fh:
    long_description = fh.read()

tests_require = [
    'pytest>=4.5.0',
]

name = 'spheremimo'
setup(name=name,
      version=_version['__version__'],
      description='MIMO antenna design in the spherical mode domain',
      long_description=long_description,
      long_description_content_type="text/markdown",
      python_requires=">=3.8",
      packages=find_packages(include=['spheremimo*']),
      package_data={'spheremimo': ['resources/*.ini']},
      include_package_data=True,
      tests_require=tests_require,
      test_suite='tests',
      install_requires=[
          'numpy>=1.17.0',
          'scipy>=1.4.0',
          'xarray>=0.12.3',
          'pandas>0.20.0',
          'matplotlib',
      ],
      extras_require={
          "dev": tests_require + [
              "sphinx",
              "sphinx-autodoc-annotation",
              "sphinx-autodoc-typehints",
              "flake8",
              "myst-parser",
          ]
      },
      entry_points={
          "console_scripts": ["spheremimo=spheremimo.cli:main"],
      },
      classifiers=[
          "Programming Language :: Python :: 3.8",
          "Programming Language :: Python :: 3.9",
          "License :: OSI Approved :: Apache Software License",
          "Development Status :: 3 - Alpha",
          "Operating System :: OS Independent",
      ]
      )
